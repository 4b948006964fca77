"""Command line entry point: run episodes, generate scenes, dump maps from traces."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import R2FConfig
from .errors import ConfigurationError
from .frontiers import compute_regions
from .harness import Episode, EpisodeSpec, run_batch, run_episode, write_results, write_trace
from .occupancy import CellClass
from .sim import SceneSpec, build_beacon_scene, build_decoy_scene, generate_scene


def _load_config(path) -> R2FConfig:
    return R2FConfig.load(path) if path else R2FConfig()


def _scene_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    return sorted(path.glob("*.json"))


def build_specs(scene_dir, mode: str, policy: str, episodes: int, seed: int) -> list[EpisodeSpec]:
    """Episodes from the suggested tasks of each scene, round-robin over scenes."""
    per_scene = []
    for f in _scene_files(Path(scene_dir)):
        scene = SceneSpec.load(f)
        per_scene.append([(str(f), t) for t in scene.tasks if t.mode == mode])
    specs: list[EpisodeSpec] = []
    depth = 0
    while len(specs) < episodes and any(depth < len(ts) for ts in per_scene):
        for ts in per_scene:
            if depth < len(ts) and len(specs) < episodes:
                f, t = ts[depth]
                i = len(specs)
                specs.append(EpisodeSpec(f, t.start, mode, t.query, seed + i, policy,
                                         episode_id=f"{Path(f).stem}-{depth}"))
        depth += 1
    return specs


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    specs = build_specs(args.scenes, args.mode, args.policy, args.episodes, args.seed)
    if not specs:
        print(f"no {args.mode} tasks found under {args.scenes}", file=sys.stderr)
        return 2
    report = run_batch(specs, cfg, args.workers, trace=args.trace)
    summary_path = write_results(report, args.out)
    if args.trace:
        trace_dir = Path(args.out).with_suffix("").with_name(Path(args.out).stem + "-traces")
        for spec, res in zip(specs, report.results):
            if getattr(res, "trace", None) is not None:
                write_trace(res, spec, cfg, trace_dir / f"{spec.episode_id}.jsonl")
    summary = report.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    print(f"results: {args.out}\nsummary: {summary_path}")
    for err in report.errors:
        print(f"error in {err.episode_id}: {err.error}: {err.message.splitlines()[0]}", file=sys.stderr)
    return 0 if not report.errors else 1


def cmd_gen_scenes(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        s = args.seed + i
        if args.kind == "random":
            scene = generate_scene(s, args.difficulty)
        elif args.kind == "beacon":
            scene = build_beacon_scene(s)
        else:
            scene = build_decoy_scene(s)
        path = out / f"{args.kind}-{s:04d}.json"
        scene.save(path)
        print(path)
    return 0


def _read_trace(path):
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    return header, [json.loads(l) for l in lines[1:]]


def write_pgm(classes_2d: np.ndarray, path) -> None:
    """Top-down map: unknown grey, free white, occupied black; +x right, +y up."""
    shade = np.full(classes_2d.shape, 128, dtype=np.uint8)
    shade[classes_2d == CellClass.FREE] = 255
    shade[classes_2d == CellClass.OCCUPIED] = 0
    img = np.flipud(shade.T)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(img.tobytes())


def cmd_dump_map(args) -> int:
    """Replay a traced episode up to ``--step`` and write its map."""
    header, records = _read_trace(args.trace)
    cfg = R2FConfig.from_dict(header["config"])
    sp = header["spec"]
    scene_path = Path(sp["scene"])
    if not scene_path.is_file() and args.scene:
        scene_path = Path(args.scene)
    spec = EpisodeSpec(str(scene_path), tuple(sp["start"]), sp["mode"], sp["query"], sp["seed"], sp["policy"],
                       sp.get("feature_override"), sp.get("episode_id", ""))
    ep = Episode(spec, cfg)
    while not ep.done and ep.t <= args.step:
        rec = ep.advance()
        if rec["step"] < len(records) and records[rec["step"]]["action"] != rec["action"]:
            print(f"replay diverged from the trace at step {rec['step']}", file=sys.stderr)
            return 1
    b = ep.grid.index_bounds()
    if b is None:
        print("map is empty", file=sys.stderr)
        return 1
    lo, hi = b
    vs = cfg.voxel_size
    k0 = int(np.floor(cfg.band_low / vs))
    k1 = int(np.ceil(cfg.band_high / vs))
    snap = ep.grid.snapshot_indices((lo[0], lo[1], k0), (hi[0], hi[1], k1))
    cls = snap.classes
    occ = np.any(cls == CellClass.OCCUPIED, axis=2)
    free = np.any(cls == CellClass.FREE, axis=2) & ~occ
    top = np.where(occ, CellClass.OCCUPIED, np.where(free, CellClass.FREE, CellClass.UNKNOWN))
    out = Path(args.out)
    write_pgm(top, out)
    print(out)
    if args.voxels:
        vox = ep.grid.nonzero_voxels()
        np.savetxt(args.voxels, vox, delimiter=",", header="x,y,z,log_odds", comments="",
                   fmt=["%.3f", "%.3f", "%.3f", "%.6f"])
        print(args.voxels)
    if args.regions:
        regions = ep.regions or compute_regions(snap, cfg.band_low, cfg.band_high, cfg.k_u, cfg.k_f, cfg.merge_radius)
        with open(args.regions, "w") as fh:
            fh.write("id,cx,cy,cz,voxels,bins,invalidated\n")
            for r in regions:
                c = r.centroid
                fh.write(f"{r.id},{c[0]:.4f},{c[1]:.4f},{c[2]:.4f},{r.size},{len(r.bins)},{int(r.invalidated)}\n")
        print(args.regions)
    return 0


def cmd_episode(args) -> int:
    """Run one scene task and print its result (and optionally write its trace)."""
    cfg = _load_config(args.config)
    scene = SceneSpec.load(args.scene)
    t = scene.tasks[args.task]
    spec = EpisodeSpec(args.scene, t.start, t.mode, t.query, args.seed, args.policy,
                       episode_id=f"{Path(args.scene).stem}-{args.task}")
    res = run_episode(spec, cfg, trace=args.trace is not None, scene=scene)
    if args.trace:
        write_trace(res, spec, cfg, args.trace)
    print(json.dumps(res.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="r2f", description="Semantic ray-frontier navigation in simulated scenes")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a batch of episodes")
    r.add_argument("--scenes", required=True, help="scene JSON file or directory of them")
    r.add_argument("--mode", choices=["objectnav", "vln"], default="objectnav")
    r.add_argument("--policy", choices=["r2f", "nearest"], default="r2f")
    r.add_argument("--episodes", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="results JSONL path")
    r.add_argument("--trace", action="store_true", help="write per-step traces next to the results")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--config", help="JSON config file")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen-scenes", help="generate scene JSON files")
    g.add_argument("--kind", choices=["random", "beacon", "decoy"], default="random")
    g.add_argument("--difficulty", choices=["small", "medium"], default="small")
    g.add_argument("--count", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_scenes)

    d = sub.add_parser("dump-map", help="replay a trace and dump the map at a step")
    d.add_argument("--trace", required=True)
    d.add_argument("--step", type=int, required=True)
    d.add_argument("--out", required=True, help="top-down PGM path")
    d.add_argument("--voxels", help="also write non-zero voxels as CSV")
    d.add_argument("--regions", help="also write frontier regions as CSV")
    d.add_argument("--scene", help="scene file, if the trace's path no longer resolves")
    d.set_defaults(func=cmd_dump_map)

    e = sub.add_parser("episode", help="run a single scene task")
    e.add_argument("--scene", required=True)
    e.add_argument("--task", type=int, default=0)
    e.add_argument("--policy", choices=["r2f", "nearest"], default="r2f")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--trace", help="trace JSONL path")
    e.add_argument("--config", help="JSON config file")
    e.set_defaults(func=cmd_episode)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"r2f: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
