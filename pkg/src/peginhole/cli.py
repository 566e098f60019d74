"""``peginhole`` command line: train, eval, serve, report.

Exit codes: 0 success, 1 robot unreachable, 2 invalid input (config,
weights, bind address), 3 curriculum gate not met.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import signal
import sys
import threading
import time
from pathlib import Path

from . import __version__
from . import config as cfgmod
from .agent import CASES, CaseSpec, CurriculumGateError, evaluate, run_curriculum, write_episode_csv
from .contact_sim import Simulator
from .controller import Controller
from .env import N_ACTIONS, STATE_DIM, InProcessTransport, Phase, TransportError
from .lstm_q import QNetwork
from .robot_service import RobotServer, UdpClient, UdpTransport, default_bind, parse_address

log = logging.getLogger("peginhole")

WEIGHT_FILES = {"search_stage1": "search_stage1.wts", "search_stage2": "search_stage2.wts",
                "insertion": "insertion.wts"}


class UsageError(Exception):
    """Maps to exit code 2."""


def _load_config(args) -> cfgmod.RunConfig:
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigError as exc:
        raise UsageError(str(exc)) from None
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if getattr(args, "out", None):
        over["out"] = args.out
    if getattr(args, "transport", None):
        over["transport"] = args.transport
    for flag in ("skip_gate", "threaded"):
        if getattr(args, flag, False):
            over[flag] = True
    if over:
        data = cfg.to_dict()
        data.update(over)
        try:
            cfg = cfgmod.from_dict(data, "<command line>")
        except cfgmod.ConfigError as exc:
            raise UsageError(str(exc)) from None
    return cfg


def _transport_factory(cfg: cfgmod.RunConfig):
    if cfg.transport == "in-process":
        return lambda: InProcessTransport(Controller(Simulator(cfg.sim, cfg.hole)))
    addr = parse_address(cfg.transport[len("udp:"):])
    return lambda: UdpTransport(UdpClient(addr))


def _manifest(cfg: cfgmod.RunConfig, command: str, **extra) -> dict:
    return {"command": command, "version": __version__, "seed": cfg.seed, "config": cfg.to_dict(), **extra}


# -- train ------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.save(cfg, out / "config.yaml")
    t0 = time.monotonic()
    status, code = "complete", 0
    try:
        result = run_curriculum(cfg.curriculum(), _transport_factory(cfg))
    except CurriculumGateError as exc:
        log.error("%s", exc)
        result, status, code = exc.partial, "gate_failed", 3
    written = []
    for name, fname in WEIGHT_FILES.items():
        net = getattr(result, name)
        if net is not None:
            net.save(out / fname)
            written.append(fname)
    write_episode_csv(out / "episodes.csv", result.logs)
    man = _manifest(cfg, "train", status=status, weights=written, elapsed_s=time.monotonic() - t0,
                    episodes=len(result.logs),
                    updates={k: len(v) for k, v in result.losses.items()})
    (out / "manifest.json").write_text(json.dumps(man, indent=2))
    log.info("training %s in %.1f s; artifacts in %s", status, man["elapsed_s"], out)
    return code


# -- eval -------------------------------------------------------------------

def _load_net(path: Path, phase: Phase) -> QNetwork:
    try:
        net = QNetwork.load(path)
    except FileNotFoundError:
        raise UsageError(f"{path}: weight file not found") from None
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    want = N_ACTIONS[phase]
    if net.n_actions != want or net.n_in != STATE_DIM:
        raise UsageError(f"{path}: network has {net.n_in} inputs/{net.n_actions} actions, "
                         f"{phase.value} needs {STATE_DIM}/{want}")
    return net


def _case(args) -> CaseSpec:
    if args.case in CASES:
        return CASES[args.case]
    missing = [f for f in ("d0_mm", "clearance_um", "tilt_deg", "grid_c_mm") if getattr(args, f) is None]
    if missing:
        raise UsageError("custom case needs --" + ", --".join(m.replace("_", "-") for m in missing))
    if args.d0_mm <= 0 or args.clearance_um <= 0 or args.grid_c_mm <= 0 or abs(args.tilt_deg) >= 5:
        raise UsageError("custom case values out of range")
    return CaseSpec("custom", args.d0_mm, args.clearance_um, args.tilt_deg, args.grid_c_mm)


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    wdir = Path(args.weights)
    search = _load_net(wdir / WEIGHT_FILES["search_stage2"], Phase.SEARCH)
    insertion = _load_net(wdir / WEIGHT_FILES["insertion"], Phase.INSERTION)
    case = _case(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    transport = _transport_factory(cfg)()
    try:
        rep = evaluate(search, insertion, case, args.trials, seed=cfg.seed, transport=transport,
                       window=cfg.hp.window_W, insertion_k_max=cfg.insertion.k_max)
    finally:
        transport.close()
    out = Path(args.out or wdir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"eval_{case.name}"
    summary = rep.summary()
    (out / f"{stem}.json").write_text(json.dumps(_manifest(cfg, "eval", summary=summary, weights=str(wdir)),
                                                 indent=2))
    with open(out / f"{stem}_trials.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "success", "search_steps", "insertion_steps", "search_s", "insertion_s"])
        for i, (ok, ks, ki) in enumerate(zip(rep.success, rep.search_steps, rep.insertion_steps)):
            w.writerow([i, int(ok), ks, ki, f"{ks * rep.cycle_s:.3f}", f"{ki * rep.cycle_s:.3f}"])
    for which, (edges, counts) in rep.histograms().items():
        with open(out / f"{stem}_hist_{which}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo_s", "bin_hi_s", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c)])
    print(_table_row(summary))
    return 0


def _table_row(s: dict) -> str:
    head = "case  clearance  angle  offset  search[s]  insertion[s]  total[s]  success"
    row = (f"{s['case']:<5} {s['clearance_um']:>6.0f}um {s['angle_error_deg']:>5.1f}d {s['initial_position_error_mm']:>5.1f}mm"
           f"  {s['search_time_s']:>9.2f}  {s['insertion_time_s']:>12.2f}  {s['total_time_s']:>8.2f}"
           f"  {100 * s['success_rate']:>6.1f}%")
    return head + "\n" + row


# -- serve ------------------------------------------------------------------

def cmd_serve(args) -> int:
    cfg = _load_config(args)
    bind = args.bind or default_bind()
    try:
        addr = parse_address(bind)
    except ValueError:
        raise UsageError(f"bad bind address {bind!r}") from None
    ctl = Controller(Simulator(cfg.sim, cfg.hole), realtime=args.realtime)
    try:
        server = RobotServer(ctl, addr, default_d0_mm=cfg.stage1.d0_mm, seed=cfg.seed)
    except OSError as exc:
        raise UsageError(f"cannot bind {addr[0]}:{addr[1]}: {exc.strerror or exc}") from None

    def stop(signum, frame):
        log.info("signal %d, shutting down", signum)
        server.shutdown()

    if threading.current_thread() is threading.main_thread():
        signal.signal(signal.SIGTERM, stop)
        signal.signal(signal.SIGINT, stop)
    print(f"serving on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        server.serve_forever()
    finally:
        server.close()
        log.info("handled %d requests (%d replayed)", server.handled, server.replayed)
        logging.shutdown()
    return 0


# -- report -----------------------------------------------------------------

def cmd_report(args) -> int:
    from .report import write_report

    run_dir = Path(args.run_dir)
    if not (run_dir / "episodes.csv").is_file():
        raise UsageError(f"{run_dir}: no episodes.csv")
    if args.window < 1:
        raise UsageError("--window must be >= 1")
    summary = write_report(run_dir, args.window, plot=not args.no_plot)
    for stage, s in summary.items():
        rho = s["reward_spearman"]
        print(f"{stage:<14} episodes={s['episodes']:<4} reward={s['final_reward_mean']:+.3f} "
              f"steps={s['final_steps_mean']:.1f} success={s['success_rate']:.2f} "
              f"spearman={'n/a' if rho is None else format(rho, '+.3f')}")
    return 0


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="peginhole", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True, transport=True):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")
        if transport:
            sp.add_argument("--transport", help="in-process or udp:<host>:<port>")

    t = sub.add_parser("train", help="run the full curriculum")
    common(t)
    t.add_argument("--skip-gate", action="store_true", help="continue to stage 2 even below the success gate")
    t.add_argument("--threaded", action="store_true", help="run acting and learning in separate threads")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="greedy evaluation of trained networks")
    common(e)
    e.add_argument("--weights", required=True, help="directory with search_stage2.wts and insertion.wts")
    e.add_argument("--case", default="A", choices=[*CASES, "custom"])
    e.add_argument("--trials", type=int, default=100)
    e.add_argument("--d0-mm", type=float)
    e.add_argument("--clearance-um", type=float)
    e.add_argument("--tilt-deg", type=float)
    e.add_argument("--grid-c-mm", type=float)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="UDP robot service backed by the simulator")
    common(s, out=False, transport=False)
    s.add_argument("--bind", help="host:port (default $PEGINHOLE_BIND or 127.0.0.1:9870)")
    s.add_argument("--realtime", action="store_true", help="pace polls at the 40 ms cycle")
    s.set_defaults(func=cmd_serve)

    r = sub.add_parser("report", help="moving-window learning curves from a run directory")
    r.add_argument("run_dir")
    r.add_argument("--window", type=int, default=20)
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
