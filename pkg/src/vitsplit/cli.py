"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 configuration, 3 runtime/protocol.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .errors import (CodecError, EstimationError, FitError, ProtocolError, ScheduleError,
                     SessionError, SpecError, TraceError)
from .model import resolve_spec
from .profiling import BandwidthEstimator, LatencyModel, fit_latency_model, read_samples_csv
from .pruning import PruningForm, PruningPolicy, build_schedule
from .scheduler import SchedulerConfig, schedule
from .simulator import (AccuracyTable, GroundTruth, Policy, SimOptions, compare_policies,
                        comparison_csv, convert_trace, load_trace, run_simulation)
from .splitting import candidate_split_points

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("vitsplit")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def atomic_write(path: str | Path, text: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode() if isinstance(text, str) else text
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _scheduler_args(p):
    p.add_argument("--spec", required=True, help="preset name or spec JSON path")
    p.add_argument("--sla", type=float, default=300.0, help="latency SLA in ms")
    p.add_argument("--grid-step", type=float, default=0.01)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--compression-ratio", type=float, default=1.0)
    p.add_argument("--raw-input-bytes", type=int)
    p.add_argument("--rtt-ms", type=float, default=0.0)


def _sched_config(a) -> SchedulerConfig:
    try:
        return SchedulerConfig(a.sla, a.grid_step, a.k, a.compression_ratio,
                               a.raw_input_bytes, a.rtt_ms)
    except ValueError as exc:
        raise SpecError(str(exc)) from exc


def _sim_args(p):
    _scheduler_args(p)
    p.add_argument("--device", required=True, help="device latency model JSON (predictor)")
    p.add_argument("--cloud", required=True, help="cloud latency model JSON (predictor)")
    p.add_argument("--device-true", help="ground-truth device model (default: --device)")
    p.add_argument("--cloud-true", help="ground-truth cloud model (default: --cloud)")
    p.add_argument("--trace", required=True, help="canonical trace CSV")
    p.add_argument("--accuracy-table", help="JSON {knots: [{alpha, accuracy}, ...]}")
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--cold-start-mbps", type=float)
    p.add_argument("--frames", type=int)
    p.add_argument("--baseline-alpha", type=float)
    p.add_argument("--baseline-tokens-per-layer", type=int, default=23)
    p.add_argument("--baseline-constant", action="store_true",
                   help="baselines prune exactly N tokens per layer")
    p.add_argument("--out", required=True, help="output directory")


def _sim_inputs(a):
    spec = resolve_spec(a.spec)
    cfg = _sched_config(a)
    dev, cld = LatencyModel.load(a.device), LatencyModel.load(a.cloud)
    truth = GroundTruth(LatencyModel.load(a.device_true) if a.device_true else dev,
                        LatencyModel.load(a.cloud_true) if a.cloud_true else cld,
                        a.jitter, a.seed)
    table = AccuracyTable.load(a.accuracy_table) if a.accuracy_table else None
    opts = SimOptions(window=a.window,
                      cold_start_bps=a.cold_start_mbps * 1e6 if a.cold_start_mbps else None,
                      frames=a.frames, baseline_alpha=a.baseline_alpha,
                      baseline_tokens_per_layer=a.baseline_tokens_per_layer,
                      baseline_constant=a.baseline_constant)
    return load_trace(a.trace), spec, cfg, truth, table, (dev, cld), opts


def cmd_profile_fit(a):
    model = fit_latency_model(read_samples_csv(a.csv))
    text = _dump(model.to_dict())
    if a.out:
        atomic_write(a.out, text)
    else:
        sys.stdout.write(text)
    if model.weak_fit:
        print(f"warning: weak linear fit (r={model.r:.3f})", file=sys.stderr)


def cmd_schedule(a):
    spec = resolve_spec(a.spec)
    dec = schedule(spec, LatencyModel.load(a.device), LatencyModel.load(a.cloud),
                   a.bandwidth_mbps * 1e6, _sched_config(a))
    sys.stdout.write(_dump(dec.to_dict()))


def cmd_simulate(a):
    trace, spec, cfg, truth, table, preds, opts = _sim_inputs(a)
    m = run_simulation(trace, spec, cfg, truth, table, a.policy, preds, opts)
    out = Path(a.out)
    atomic_write(out / f"{m.policy}_frames.csv", m.per_frame_csv())
    atomic_write(out / f"{m.policy}_metrics.json", _dump(m.summary()))
    sys.stdout.write(_dump(m.summary()))


def cmd_compare(a):
    trace, spec, cfg, truth, table, preds, opts = _sim_inputs(a)
    results = compare_policies(trace, spec, cfg, truth, table, preds, opts)
    out = Path(a.out)
    for m in results.values():
        atomic_write(out / f"{m.policy}_frames.csv", m.per_frame_csv())
        atomic_write(out / f"{m.policy}_metrics.json", _dump(m.summary()))
    text = comparison_csv(results)
    atomic_write(out / "comparison.csv", text)
    sys.stdout.write(text)


def cmd_split_points(a):
    print(" ".join(map(str, candidate_split_points(a.layers, a.k))))


def cmd_prune_table(a):
    spec = resolve_spec(a.spec)
    try:
        policy = PruningPolicy(a.alpha, a.grid_step, PruningForm(a.form))
    except ValueError as exc:
        raise SpecError(str(exc)) from exc
    sys.stdout.write(build_schedule(spec, policy).to_csv())


def cmd_trace_convert(a):
    mapping = json.loads(Path(a.mapping).read_text())
    atomic_write(a.out, convert_trace(a.src, mapping).to_csv())


def cmd_lzw(a):
    from .runtime import lzw
    src = Path(a.input).read_bytes() if a.input else sys.stdin.buffer.read()
    data = lzw.compress(src) if a.action == "compress" else lzw.decompress(src)
    if a.output:
        atomic_write(a.output, data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()


def cmd_cloud_serve(a):
    from .runtime.cloud import cloud_serve
    specs = [resolve_spec(s) for s in a.spec]
    cloud_serve({s.name: s for s in specs}, LatencyModel.load(a.model), a.host, a.port,
                a.jitter, a.seed)


def cmd_device_run(a):
    from .runtime.device import DeviceSession
    from .runtime.executor import SyntheticExecutor

    spec = resolve_spec(a.spec)
    cfg = _sched_config(a)
    dev, cld = LatencyModel.load(a.device), LatencyModel.load(a.cloud)
    exec_model = LatencyModel.load(a.executor) if a.executor else dev
    est = BandwidthEstimator(a.cold_start_mbps * 1e6, a.window)
    executor = SyntheticExecutor(exec_model, a.jitter, a.seed)
    with DeviceSession(spec, executor, a.host, a.port, timeout=a.timeout,
                       compress=not a.no_compress, raw_input_bytes=a.raw_input_bytes,
                       grid_step=a.grid_step, seed=a.seed) as sess:
        for _ in range(a.frames):
            bw = est.estimate()
            dec = schedule(spec, dev, cld, bw, cfg)
            res = sess.run_frame(dec)
            if res.wire_bytes and res.comm_ms > 0:
                est.observe(res.wire_bytes * 8 / (res.comm_ms / 1000))
            print(json.dumps({"frame": res.frame, "alpha": dec.alpha, "split": dec.split_point,
                              "predicted_ms": dec.predicted_total_ms, "measured_ms": res.e2e_ms,
                              "device_ms": res.device_ms, "cloud_ms": res.cloud_ms,
                              "comm_ms": res.comm_ms, "codec_ms": res.codec_ms,
                              "wire_bytes": res.wire_bytes}), flush=True)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vitsplit", description="Split ViT inference planning, simulation and runtime.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    prof = sub.add_parser("profile", help="latency profiling").add_subparsers(dest="sub", required=True)
    fit = prof.add_parser("fit", help="fit a linear latency model from tokens,latency_ms CSV")
    fit.add_argument("csv")
    fit.add_argument("-o", "--out")
    fit.set_defaults(func=cmd_profile_fit)

    sc = sub.add_parser("schedule", help="one-shot scheduling decision")
    _scheduler_args(sc)
    sc.add_argument("--device", required=True)
    sc.add_argument("--cloud", required=True)
    sc.add_argument("--bandwidth-mbps", type=float, required=True)
    sc.set_defaults(func=cmd_schedule)

    sim = sub.add_parser("simulate", help="replay a trace under one policy")
    _sim_args(sim)
    sim.add_argument("--policy", choices=[x.value for x in Policy], default="janus")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="replay a trace under every policy")
    _sim_args(cmp_)
    cmp_.set_defaults(func=cmd_compare)

    sp = sub.add_parser("split-points", help="print the candidate split set")
    sp.add_argument("--layers", type=int, required=True)
    sp.add_argument("--k", type=int, required=True)
    sp.set_defaults(func=cmd_split_points)

    pt = sub.add_parser("prune-table", help="print a pruning schedule as CSV")
    pt.add_argument("--spec", required=True)
    pt.add_argument("--alpha", type=float, required=True)
    pt.add_argument("--grid-step", type=float, default=0.01)
    pt.add_argument("--form", choices=[f.value for f in PruningForm], default="exponential")
    pt.set_defaults(func=cmd_prune_table)

    tr = sub.add_parser("trace", help="trace utilities").add_subparsers(dest="sub", required=True)
    conv = tr.add_parser("convert", help="map a throughput log onto timestamp_s,uplink_mbps")
    conv.add_argument("src")
    conv.add_argument("--mapping", required=True)
    conv.add_argument("-o", "--out", required=True)
    conv.set_defaults(func=cmd_trace_convert)

    lz = sub.add_parser("lzw", help="LZW codec on files or stdin/stdout")
    lz.add_argument("action", choices=["compress", "decompress"])
    lz.add_argument("-i", "--input")
    lz.add_argument("-o", "--output")
    lz.set_defaults(func=cmd_lzw)

    cl = sub.add_parser("cloud", help="cloud server").add_subparsers(dest="sub", required=True)
    serve = cl.add_parser("serve")
    serve.add_argument("--spec", action="append", required=True, help="repeatable")
    serve.add_argument("--model", required=True, help="cloud executor latency model JSON")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, help="default $VITSPLIT_PORT or 7431")
    serve.add_argument("--jitter", type=float, default=0.0)
    serve.add_argument("--seed", type=int, default=0)
    serve.set_defaults(func=cmd_cloud_serve)

    dv = sub.add_parser("device", help="device agent").add_subparsers(dest="sub", required=True)
    run = dv.add_parser("run")
    _scheduler_args(run)
    run.add_argument("--device", required=True, help="device predictor JSON")
    run.add_argument("--cloud", required=True, help="cloud predictor JSON")
    run.add_argument("--executor", help="device executor model JSON (default: --device)")
    run.add_argument("--host", default="127.0.0.1")
    run.add_argument("--port", type=int)
    run.add_argument("--frames", type=int, default=10)
    run.add_argument("--cold-start-mbps", type=float, default=7.6)
    run.add_argument("--window", type=int, default=5)
    run.add_argument("--jitter", type=float, default=0.0)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--timeout", type=float, default=30.0)
    run.add_argument("--no-compress", action="store_true")
    run.set_defaults(func=cmd_device_run)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (SpecError, FitError, TraceError, ScheduleError, EstimationError,
            FileNotFoundError, IsADirectoryError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SessionError, ProtocolError, CodecError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
