"""Command-line entry point: ``synth``, ``ioc`` and ``diagnose``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import forward, ioc, pipeline, report, synth
from .flock import (
    STATE_DIM,
    WEIGHT_DIM,
    FlockHierarchy,
    WeightVector,
    format_hierarchy,
    load_hierarchy,
    normalize_pins,
    validate_hierarchy,
)

log = logging.getLogger("pigeon_ioc")

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 5.0, 5.0, 1.0)
DEFAULT_X0_OFFSET = (0.5, -0.5, 1.0, 0.2, -0.2, 0.3)


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    hierarchy: str = "builtin:table1"
    data: str | None = None
    flights: list[str] | None = None
    known_index: tuple[int, ...] = (9,)
    known_value: tuple[float, ...] = (1.0,)
    trim_warmup: bool = False
    clip: bool = False
    smooth: int = 1
    t_start: float | None = None
    t_end: float | None = None
    resample: float | None = None
    out: str = "."
    jobs: int = 1

    def pins(self):
        idx, vals = normalize_pins(self.known_index, self.known_value)
        return (idx[0], vals[0]) if len(idx) == 1 else (idx, vals)


def _float_list(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.split(",") if v.strip())


def _str_list(s: str) -> list[str]:
    return [v.strip() for v in s.split(",") if v.strip()]


def config_from_args(args) -> RunConfig:
    idx = args.known_index
    vals = tuple(args.known_value) if len(args.known_value) > 1 else (args.known_value[0],) * len(idx)
    try:
        normalize_pins(idx, vals)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    return RunConfig(
        hierarchy=args.hierarchy,
        data=args.data,
        flights=args.flights,
        known_index=idx,
        known_value=vals,
        trim_warmup=args.trim_warmup,
        clip=args.clip,
        smooth=args.smooth,
        t_start=args.t_start,
        t_end=args.t_end,
        resample=args.resample,
        out=args.out,
        jobs=max(1, args.jobs),
    )


def _hierarchy(cfg: RunConfig) -> FlockHierarchy:
    if cfg.hierarchy != "builtin:table1" and not Path(cfg.hierarchy).exists():
        raise CliError(f"hierarchy file not found: {cfg.hierarchy}")
    try:
        return load_hierarchy(cfg.hierarchy)
    except ValueError as exc:
        raise CliError(f"{cfg.hierarchy}: {exc}") from None


def _check_hierarchy(h: FlockHierarchy, dt: float):
    problems = validate_hierarchy(h, dt)
    if problems:
        raise CliError("invalid hierarchy: " + "; ".join(f"{v.kind}: {v.detail}" for v in problems))


def _load(cfg: RunConfig):
    if not cfg.data:
        raise CliError("--data is required")
    if not Path(cfg.data).exists():
        raise CliError(f"data file not found: {cfg.data}")
    try:
        tracks = pipeline.load_tracks(cfg.data, resample=cfg.resample)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if not tracks:
        raise CliError(f"{cfg.data}: no tracks")
    h = _hierarchy(cfg)
    _check_hierarchy(h, tracks[0].dt)
    flights = cfg.flights or list(dict.fromkeys(t.flight_id for t in tracks))
    if not flights:
        raise CliError("no flights selected")
    return tracks, h, flights


# -- synth -------------------------------------------------------------------

def _read_weights(path: str | None, followers: list[str], pins) -> dict[str, WeightVector]:
    table: dict[str, list[float]] = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        table = doc.get("weights", doc)
    out = {}
    for f in followers:
        c = table.get(f, table.get("default", DEFAULT_WEIGHTS))
        c = np.asarray(c, dtype=float)
        if c.shape != (WEIGHT_DIM,):
            raise CliError(f"weights for {f} must have {WEIGHT_DIM} entries")
        if np.any(c[STATE_DIM:] <= 0) or np.any(c[:STATE_DIM] < 0):
            raise CliError(f"invalid weights for {f}: need Q >= 0 and R > 0, got {c.tolist()}")
        out[f] = WeightVector.pinned(c, pins[0])
    return out


def cmd_synth(cfg: RunConfig, leader: str, horizon: float, dt: float, weights_path: str | None,
              x0_offset, noise: float, seed: int) -> int:
    h = _hierarchy(cfg)
    _check_hierarchy(h, dt)
    flights = cfg.flights or ["SYN1"]
    leader_specs = _str_list(leader)
    if len(leader_specs) == 1:
        leader_specs = leader_specs * len(flights)
    if len(leader_specs) != len(flights):
        raise CliError("give one leader spec, or one per flight")
    weights = _read_weights(weights_path, h.followers, cfg.pins())
    offset = np.asarray(x0_offset, dtype=float)
    if offset.size == 1:
        offset = np.full(STATE_DIM, offset.item())
    if offset.shape != (STATE_DIM,):
        raise CliError(f"--x0-offset needs 1 or {STATE_DIM} values")
    rng = np.random.default_rng(seed)
    tracks = []
    for flight, spec in zip(flights, leader_specs):
        try:
            lead = synth.leader_from_spec(spec, horizon, dt)
        except (ValueError, OSError) as exc:
            raise CliError(str(exc)) from None
        # each follower starts offset from its leader's initial state
        start = {next(iter(h.roots)): lead.states[0]}
        for pair in h.topological_pairs():
            start[pair.follower] = start[pair.leader] + offset
        trajs = forward.rollout_hierarchy(h, lead, weights, start)
        ftracks = pipeline.tracks_from_trajectories(flight, trajs)
        if noise > 0:
            ftracks = [
                pipeline.RawTrack(t.flight_id, t.pigeon_id, t.t, t.xyz + rng.normal(0.0, noise, t.xyz.shape))
                for t in ftracks
            ]
        tracks.extend(ftracks)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_tracks(out / "tracks.csv", tracks)
    (out / "hierarchy.txt").write_text(format_hierarchy(h), encoding="utf-8")
    idx, vals = normalize_pins(*cfg.pins())
    truth = {
        "known_index": idx[0] if len(idx) == 1 else list(idx),
        "weights": {f: [float(v) for v in w.c] for f, w in weights.items()},
        "flights": flights,
        "leader": leader_specs,
        "horizon": horizon,
        "dt": dt,
        "x0_offset": offset.tolist(),
        "noise": noise,
        "seed": seed,
    }
    (out / "ground_truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {len(tracks)} tracks for {len(flights)} flight(s) to {out / 'tracks.csv'}")
    return 0


# -- ioc / diagnose ----------------------------------------------------------

@dataclass
class _Work:
    follower: str
    flights: list[str]
    datasets: list
    errors: list[str]


def _collect(cfg: RunConfig, tracks, h, flights) -> list[_Work]:
    work = []
    for pair in h.pairs:
        sub = FlockHierarchy((pair,))
        item = _Work(pair.follower, [], [], [])
        for flight in flights:
            try:
                ds = pipeline.build_pair_datasets(
                    tracks, sub, [flight], cfg.trim_warmup, cfg.smooth, cfg.t_start, cfg.t_end
                )[0]
            except ValueError as exc:
                item.errors.append(f"{pair.follower}/{flight}: {exc}")
                continue
            item.flights.append(flight)
            item.datasets.append(ds)
        work.append(item)
    return work


def _gram(ds):
    try:
        return ioc.assemble_gram_single(ds.traj, ds.desired), None
    except ValueError as exc:
        return None, f"{ds.follower_id}/{ds.flight_id}: {exc}"


def _grams(cfg, work):
    flat = [ds for w in work for ds in w.datasets]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            res = list(pool.map(_gram, flat))
    else:
        res = [_gram(ds) for ds in flat]
    it = iter(res)
    return [[next(it) for _ in w.datasets] for w in work]


def _t_f_label(durations) -> str:
    vals = list(dict.fromkeys(report.format_seconds(d) for d in durations))
    return vals[0] if len(vals) == 1 else " / ".join(vals)


def cmd_ioc(cfg: RunConfig) -> int:
    tracks, h, flights = _load(cfg)
    work = _collect(cfg, tracks, h, flights)
    grams = _grams(cfg, work)
    pins = cfg.pins()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    text = []
    for w, gs in zip(work, grams):
        pair = h.pair_for(w.follower)
        runs, rows, errors = [], [], list(w.errors)
        ok = []
        for flight, ds, (g, err) in zip(w.flights, w.datasets, gs):
            if g is None:
                errors.append(err)
                rows.append(report.TableRow(flight, "-", None, err))
                continue
            try:
                sol = ioc.solve_weights(g, *pins, clip=cfg.clip, flight_ids=(flight,))
            except ValueError as exc:
                errors.append(f"{w.follower}/{flight}: {exc}")
                rows.append(report.TableRow(flight, "-", None, str(exc)))
                continue
            ok.append((flight, ds, g))
            runs.append({"flights": [flight], "t_f": ds.traj.duration, "solution": sol.to_dict()})
            rows.append(report.TableRow(flight, report.format_seconds(ds.traj.duration), sol))
        if ok:
            ids = tuple(f for f, _, _ in ok)
            W = sum((g for _, _, g in ok[1:]), ok[0][2])
            try:
                sol = ioc.solve_weights(W, *pins, clip=cfg.clip, flight_ids=ids)
                label = ", ".join(ids)
                tf = _t_f_label(ds.traj.duration for _, ds, _ in ok)
                runs.append({"flights": list(ids), "combined": True, "t_f": [ds.traj.duration for _, ds, _ in ok],
                             "solution": sol.to_dict()})
                rows.append(report.TableRow(label, tf, sol))
            except ValueError as exc:
                errors.append(f"{w.follower}/combined: {exc}")
        if errors:
            failed = True
            for e in errors:
                log.error("%s", e)
        doc = {"follower": w.follower, "leader": pair.leader, "delay": pair.delay, "runs": runs, "errors": errors}
        (out / f"{w.follower}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        text.append(report.render_table(f"Pigeon {w.follower} (leader {pair.leader}, delay {pair.delay:g} s)", rows))
    body = "\n".join(text)
    (out / "report.txt").write_text(body, encoding="utf-8")
    sys.stdout.write(body)
    return 1 if failed else 0


def _verdict(single: list[ioc.Diagnostics], stacked: ioc.Diagnostics) -> str:
    if stacked.rank == 0:
        return "rank 0"
    if not single:
        return "no data"
    best_rank = max(d.rank for d in single)
    best_rw = min(d.r_w for d in single)
    if stacked.rank > best_rank:
        return "improved"
    if stacked.rank == best_rank and stacked.r_w < best_rw * (1 - 1e-6):
        return "improved"
    return "no new information"


def cmd_diagnose(cfg: RunConfig) -> int:
    tracks, h, flights = _load(cfg)
    work = _collect(cfg, tracks, h, flights)
    grams = _grams(cfg, work)
    idx, _ = normalize_pins(*cfg.pins())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    doc, text = {}, []
    for w, gs in zip(work, grams):
        errors = list(w.errors) + [e for g, e in gs if g is None]
        singles, entry = [], {"flights": {}, "errors": errors}
        lines = [f"Pigeon {w.follower}"]
        good = []
        for flight, (g, _) in zip(w.flights, gs):
            if g is None:
                continue
            d = ioc.diagnose(g, idx)
            singles.append(d)
            good.append(g)
            entry["flights"][flight] = d.to_dict()
            lines.append(report.render_diagnostics(flight, d))
        if good:
            W = sum(good[1:], good[0])
            st = ioc.diagnose(W, idx)
            verdict = _verdict(singles, st)
            entry["stacked"] = st.to_dict()
            entry["verdict"] = verdict
            lines.append(report.render_diagnostics("stacked", st))
            lines.append(f"  verdict: {verdict}")
            if st.rank == 0:
                lines.append("  flag: rank 0")
        if errors:
            failed = True
            lines += [f"  error: {e}" for e in errors]
        doc[w.follower] = entry
        text.append("\n".join(lines))
    body = "\n\n".join(text) + "\n"
    (out / "diagnose.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "diagnose.txt").write_text(body, encoding="utf-8")
    sys.stdout.write(body)
    return 1 if failed else 0


# -- argument parsing --------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--data", help="input CSV (flight_id,pigeon_id,t,x,y,z or ...,lat,lon,alt)")
    p.add_argument("--hierarchy", default="builtin:table1", help="hierarchy file or builtin:table1")
    p.add_argument("--flights", type=_str_list, help="comma-separated flight ids")
    p.add_argument("--known-index", type=_int_list, default=(9,),
                   help="1-based index (or comma list) of pinned weights, default 9")
    p.add_argument("--known-value", type=_float_list, default=[1.0],
                   help="value(s) of the pinned weights, default 1")
    p.add_argument("--trim-warmup", action="store_true", help="drop the first delay/dt samples")
    p.add_argument("--clip", action="store_true", help="zero tiny negative weights")
    p.add_argument("--smooth", type=int, default=1, help="odd moving-average window on positions")
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--resample", type=float, metavar="DT", help="resample tracks onto a DT grid")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pigeon-ioc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", help="generate a synthetic flock CSV and ground-truth weights")
    _common(p)
    p.add_argument("--leader", default="sinusoid",
                   help="sinusoid, sinusoid-x, sinusoid-y, zero, polyline:..., csv:PATH[:ID]; "
                        "comma list for one per flight")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--weights", help="JSON {follower: [9 weights], 'default': [...]} ")
    p.add_argument("--x0-offset", type=_float_list, default=list(DEFAULT_X0_OFFSET),
                   help="follower start minus leader start (1 or 6 values)")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian position noise std (m)")
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("ioc", help="recover weights per follower, single and stacked flights")
    _common(p)
    p = sub.add_parser("diagnose", help="spectra, rank and null spaces of the reduced Gram")
    _common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "synth":
            return cmd_synth(cfg, args.leader, args.horizon, args.dt, args.weights,
                             args.x0_offset, args.noise, args.seed)
        if args.command == "ioc":
            return cmd_ioc(cfg)
        return cmd_diagnose(cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
