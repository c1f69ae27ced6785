"""Thin command-line client for the engine service.

Every subcommand builds the same request the HTTP service accepts and
either executes it in-process (default) or, with --server, sends it to a
running service. ``serve`` starts the engine service, ``serve-stub`` the
loopback scorer.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path


def _emit(payload: dict):
    print(json.dumps(payload, indent=2))


def _post(server: str, path: str, payload: dict) -> dict:
    import httpx

    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=600.0)
    if resp.status_code >= 400:
        sys.stderr.write(f"error {resp.status_code}: {resp.text}\n")
        raise SystemExit(1)
    return resp.json()


def cmd_run(args) -> int:
    if args.server:
        payload = {
            "manifest": Path(args.manifest).read_text(),
            "out_dir": args.out,
            "seed": args.seed,
            "resume_from": args.resume_from,
        }
        status = _post(args.server, "/runs", payload)
        run_id = status["run_id"]
        import httpx

        while status["status"] in ("queued", "running"):
            time.sleep(1.0)
            status = httpx.get(f"{args.server.rstrip('/')}/runs/{run_id}", timeout=30).json()
            sys.stderr.write(f"\rstep {status['step']}/{status['k_total']}")
        sys.stderr.write("\n")
        _emit(status)
        return 0 if status["status"] == "completed" else 1

    from . import tasks

    try:
        out = tasks.run_manifest(
            args.manifest,
            out_dir=args.out,
            seed=args.seed,
            resume_from=args.resume_from,
        )
    except Exception as exc:
        sys.stderr.write(f"run failed: {exc}\n")
        return 1
    _emit(out)
    return 0 if out["status"] == "completed" else 1


def cmd_render(args) -> int:
    payload = {
        "checkpoint": args.checkpoint,
        "manifest": args.manifest,
        "out_dir": args.out,
        "frames": args.frames,
        "azimuth_start": args.azimuth_start,
        "azimuth_end": args.azimuth_end,
        "elevation": args.elevation,
        "distance": args.distance,
        "fov": args.fov,
        "resolution": args.resolution,
    }
    if args.server:
        _emit(_post(args.server, "/render", payload))
        return 0
    from . import tasks

    try:
        out = tasks.render_turntable(
            args.checkpoint,
            args.manifest,
            args.out,
            frames=args.frames,
            azimuth_start=args.azimuth_start,
            azimuth_end=args.azimuth_end,
            elevation=args.elevation,
            distance=args.distance,
            fov=args.fov,
            resolution=args.resolution,
        )
    except Exception as exc:
        sys.stderr.write(f"render failed: {exc}\n")
        return 1
    _emit(out)
    return 0


def cmd_eval(args) -> int:
    payload = {
        "checkpoint": args.checkpoint,
        "manifest": args.manifest,
        "view_id": args.view,
        "target": args.target,
        "out_dir": args.out,
    }
    if args.server:
        _emit(_post(args.server, "/eval", payload))
        return 0
    from . import tasks

    try:
        out = tasks.evaluate_view(
            args.checkpoint, args.manifest, args.view, args.target, out_dir=args.out
        )
    except Exception as exc:
        sys.stderr.write(f"eval failed: {exc}\n")
        return 1
    _emit(out)
    return 0


def cmd_bake(args) -> int:
    payload = {
        "manifest": args.manifest,
        "out_dir": args.out,
        "texture_resolution": args.texture_resolution,
        "render_resolution": args.render_resolution,
    }
    if args.server:
        _emit(_post(args.server, "/bake", payload))
        return 0
    from . import tasks

    try:
        out = tasks.bake_manifest(
            args.manifest,
            args.out,
            texture_resolution=args.texture_resolution,
            render_resolution=args.render_resolution,
        )
    except Exception as exc:
        sys.stderr.write(f"bake failed: {exc}\n")
        return 1
    _emit(out)
    return 0


def cmd_serve(args) -> int:  # pragma: no cover - long-running
    import uvicorn

    from .service.app import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port, log_level="info")
    return 0


def cmd_serve_stub(args) -> int:  # pragma: no cover - long-running
    from .service.stub_scorer import serve_stub

    color = tuple(float(c) for c in args.color.split(",")) if args.color else None
    serve_stub(
        host=args.host,
        port=args.port,
        target_path=args.target,
        weight=args.weight,
        color=color,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mvitex", description="view-dependent texture optimization"
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False):
        sp.add_argument("--server", default=None, help="engine service URL (default: run in-process)")
        sp.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        sp.add_argument(
            "--deterministic",
            action="store_true",
            help="fixed-order reductions (always on; flag kept for interface stability)",
        )
        if checkpoint:
            sp.add_argument("--checkpoint", required=True, help="texture checkpoint path")

    sp = sub.add_parser("run", help="execute an optimization run from a manifest")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", default=None, help="output directory (overrides manifest)")
    sp.add_argument("--resume-from", default=None, help="checkpoint to continue from")
    common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("render", help="turntable render from a checkpoint")
    sp.add_argument("--manifest", required=True, help="manifest describing the scene")
    sp.add_argument("--out", required=True)
    sp.add_argument("--frames", type=int, default=36)
    sp.add_argument("--azimuth-start", type=float, default=0.0)
    sp.add_argument("--azimuth-end", type=float, default=360.0)
    sp.add_argument("--elevation", type=float, default=0.0)
    sp.add_argument("--distance", type=float, default=None)
    sp.add_argument("--fov", type=float, default=40.0)
    sp.add_argument("--resolution", type=int, default=512)
    common(sp, checkpoint=True)
    sp.set_defaults(fn=cmd_render)

    sp = sub.add_parser("eval", help="PSNR of a view against a target image")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--view", type=int, required=True)
    sp.add_argument("--target", required=True)
    sp.add_argument("--out", default=None)
    common(sp, checkpoint=True)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("bake", help="closed-form bake of view targets onto a plain grid")
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--texture-resolution", type=int, default=256)
    sp.add_argument("--render-resolution", type=int, default=256)
    common(sp)
    sp.set_defaults(fn=cmd_bake)

    sp = sub.add_parser("serve", help="start the engine service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8900)
    sp.set_defaults(fn=cmd_serve)

    sp = sub.add_parser("serve-stub", help="start the loopback scorer stub")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8901)
    sp.add_argument("--target", default=None, help="PNG target for the l2 stub")
    sp.add_argument("--weight", type=float, default=1.0)
    sp.add_argument("--color", default=None, help="r,g,b constant-color stub")
    sp.set_defaults(fn=cmd_serve_stub)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
