"""Command-line entry point.

Every flag can also come from an environment variable named ``HITLIST6_``
plus the flag name in upper case with dashes as underscores (``--seed`` ->
``HITLIST6_SEED``, ``--in-flight`` -> ``HITLIST6_IN_FLIGHT``). Command-line
values win.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import apd, fingerprint, gfw, pipeline, reports, targetgen
from .addr import (
    Prefix,
    Protocol,
    format_addr,
    parse_addr,
    read_addr_file,
    read_prefix_file,
    write_addr_file,
    write_prefix_file,
)
from .asn import RibTable, as_cdf, load_rib
from .probe import ProbeRequest, SynAck, TcpSyn, probe_batch
from .records import CandidateStore, read_scan_record, write_scan_record
from .simnet import SimNetwork, load_scenario

ENV_PREFIX = "HITLIST6_"
log = logging.getLogger("hitlist6")


class CliError(Exception):
    pass


class EthicsRefusal(CliError):
    pass


@dataclass
class RunConfig:
    seed: int | None
    rate: float
    in_flight: int
    store: Path | None
    rib: Path | None
    blocklist: Path | None
    oui: Path | None
    scenario: Path | None
    live_opt_in: bool

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        def path(name):
            value = getattr(args, name, None)
            return Path(value) if value else None

        return cls(
            seed=getattr(args, "seed", None),
            rate=getattr(args, "rate", 10_000.0),
            in_flight=getattr(args, "in_flight", 1),
            store=path("store"),
            rib=path("rib"),
            blocklist=path("blocklist"),
            oui=path("oui"),
            scenario=path("scenario"),
            live_opt_in=bool(getattr(args, "i_understand_ethics", False)),
        )


# Helpers


def _env(flag: str, default=None):
    return os.environ.get(ENV_PREFIX + flag.lstrip("-").upper().replace("-", "_"), default)


def _add(p: argparse.ArgumentParser, flag: str, required: bool = False, **kw) -> None:
    default = _env(flag, kw.pop("default", None))
    p.add_argument(flag, default=default, required=required and default is None, **kw)


def _common_engine_flags(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    _add(p, "--seed", type=int, required=True, help="seed for every pseudo-random choice")
    _add(p, "--rate", type=float, default=10_000.0, help="probes per second (live engine)")
    _add(p, "--in-flight", type=int, default=1, help="in-flight probe window (live engine)")
    if scenario:
        _add(p, "--scenario", help="simulated network scenario file")
        p.add_argument("--live", action="store_true", help="probe the real Internet (requires opt-in)")
        p.add_argument("--i-understand-ethics", action="store_true", help="opt in to live probing")


def _engine(args: argparse.Namespace, cfg: RunConfig) -> SimNetwork:
    if getattr(args, "live", False):
        if not cfg.live_opt_in:
            raise EthicsRefusal(
                "refusing to probe live networks: pass --i-understand-ethics after reviewing scan "
                "etiquette (rate limits, opt-out handling, abuse contact) and supply --blocklist"
            )
        if cfg.blocklist is None:
            raise EthicsRefusal("refusing to probe live networks without a --blocklist file of opted-out prefixes")
        raise CliError("no live probing engine is included in this build; use --scenario")
    if cfg.scenario is None:
        raise CliError("a --scenario file is required")
    return SimNetwork(load_scenario(cfg.scenario))


def _rib(cfg: RunConfig) -> RibTable:
    return load_rib(cfg.rib) if cfg.rib else RibTable()


def _blocklist(cfg: RunConfig) -> list[Prefix]:
    return read_prefix_file(cfg.blocklist) if cfg.blocklist else []


def _out(args: argparse.Namespace):
    target = getattr(args, "output", None)
    if not target or target == "-":
        return _Stdout()
    return open(target, "w", newline="", encoding="utf-8")


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


class StateDir:
    """On-disk layout of a pipeline state directory."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)

    def init(self) -> StateDir:
        (self.root / "scans").mkdir(parents=True, exist_ok=True)
        return self

    @property
    def store(self) -> Path:
        return self.root / "store.tsv"

    @property
    def calendar(self) -> Path:
        return self.root / "calendar.tsv"

    @property
    def apd_window(self) -> Path:
        return self.root / "apd_window.json"

    @property
    def taint(self) -> Path:
        return self.root / "taint.tsv"

    @property
    def aliased(self) -> Path:
        return self.root / "aliased.txt"

    @property
    def gfw_filter(self) -> Path:
        return self.root / "gfw_filter.txt"

    def scan(self, scan_id: int, suffix: str = "tsv") -> Path:
        return self.root / "scans" / f"scan-{scan_id:06d}.{suffix}"

    def scan_ids(self) -> list[int]:
        d = self.root / "scans"
        if not d.is_dir():
            return []
        return sorted(int(p.name[5:11]) for p in d.glob("scan-*.tsv"))

    def load_store(self) -> CandidateStore:
        return CandidateStore.load(self.store) if self.store.exists() else CandidateStore()

    def load_calendar(self) -> dict[int, dt.date]:
        return pipeline.read_calendar(self.calendar) if self.calendar.exists() else {}

    def load_taint(self) -> gfw.TaintState:
        state = gfw.TaintState()
        if self.taint.exists():
            with open(self.taint, encoding="utf-8") as fh:
                for line in fh:
                    a, inj, other = line.split()
                    state.flags[parse_addr(a)] = (inj == "1", other == "1")
        return state

    def save_taint(self, state: gfw.TaintState) -> None:
        with open(self.taint, "w", encoding="utf-8") as fh:
            for a in sorted(state.flags):
                inj, other = state.flags[a]
                fh.write(f"{format_addr(a)}\t{int(inj)}\t{int(other)}\n")

    def load_record(self, scan_id: int):
        rec = read_scan_record(self.scan(scan_id))
        vpath = self.scan(scan_id, "verdicts.csv")
        if vpath.exists():
            rec.verdicts = gfw.read_verdict_log(vpath)
        return rec

    def records(self):
        return [self.load_record(s) for s in self.scan_ids()]


def _store_dir(cfg: RunConfig) -> StateDir:
    if cfg.store is None:
        raise CliError("--store is required")
    return StateDir(cfg.store)


# Subcommands


def cmd_ingest(args, cfg: RunConfig) -> int:
    state = _store_dir(cfg).init()
    store = state.load_store()
    before = len(store)
    pipeline.ingest(pipeline.read_manifest(args.manifest), store, args.scan_id)
    store.save(state.store)
    if args.date:
        cal = state.load_calendar()
        cal[args.scan_id] = dt.date.fromisoformat(args.date)
        pipeline.write_calendar(state.calendar, cal)
    print(f"ingested {len(store) - before} new addresses; store holds {len(store)}")
    return 0


def cmd_apd(args, cfg: RunConfig) -> int:
    state = _store_dir(cfg).init()
    engine = _engine(args, cfg)
    det = apd.ApdDetector.from_json(state.apd_window.read_text()) if state.apd_window.exists() else None
    if det is None or det.seed != cfg.seed:
        det = apd.ApdDetector(cfg.seed)
    addrs = state.load_store().addresses()
    candidates = {c.prefix for c in apd.enumerate_candidates(addrs, _rib(cfg))}
    results = det.scan(candidates, engine, args.scan_id, cfg.rate)
    aliased = apd.collapse(r.prefix for r in results if r.aliased)
    state.apd_window.write_text(det.to_json())
    write_prefix_file(state.aliased, aliased)
    if args.output:
        write_prefix_file(args.output, aliased)
    print(f"{len(candidates)} candidate prefixes, {len(aliased)} aliased")
    return 0


def _scan_state(state: StateDir, cfg: RunConfig) -> pipeline.Pipeline:
    det = apd.ApdDetector.from_json(state.apd_window.read_text()) if state.apd_window.exists() else None
    pl = pipeline.Pipeline(
        state.load_store(),
        cfg.seed,
        state.load_calendar(),
        rib=_rib(cfg),
        blocklist=_blocklist(cfg),
        taint=state.load_taint(),
        detector=det if det is not None and det.seed == cfg.seed else None,
        rate_limit=cfg.rate,
    )
    ids = state.scan_ids()
    if ids:
        pl.records.append(state.load_record(ids[-1]))
    return pl


def _persist_scan(state: StateDir, pl: pipeline.Pipeline, out: pipeline.ScanOutcome) -> None:
    sid = out.record.scan_id
    write_scan_record(state.scan(sid), out.record)
    gfw.write_verdict_log(state.scan(sid, "verdicts.csv"), out.record.verdicts)
    out.ledger.write_csv(state.scan(sid, "ledger.csv"))
    if out.churn is not None:
        with open(state.scan(sid, "churn.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scan_id", "new_ever", "recurring", "lost"])
            w.writerow([sid, out.churn.new_ever, out.churn.recurring, out.churn.lost])
    pl.store.save(state.store)
    pipeline.write_calendar(state.calendar, pl.calendar)
    state.apd_window.write_text(pl.detector.to_json())
    state.save_taint(pl.taint)
    write_prefix_file(state.aliased, out.aliased)
    gfw.write_filter_list(state.gfw_filter, pl.taint)


def cmd_scan(args, cfg: RunConfig) -> int:
    engine = _engine(args, cfg)
    state = _store_dir(cfg).init()
    pl = _scan_state(state, cfg)
    if args.date:
        pl.calendar[args.scan_id] = dt.date.fromisoformat(args.date)
    if args.scan_id in state.scan_ids():
        raise CliError(f"scan {args.scan_id} already exists in {state.root}")
    pl.readmit_slices = args.readmit_slices
    out = pl.scan(engine, args.scan_id)
    _persist_scan(state, pl, out)
    stages = ", ".join(f"{s.stage} -{s.removed_count}" for s in out.ledger.stages)
    print(f"scan {args.scan_id}: {len(out.record.probed)} probed, {len(out.record.responsive_any())} responsive ({stages})")
    return 0


def cmd_gfw_clean(args, cfg: RunConfig) -> int:
    state = _store_dir(cfg)
    records = state.records()
    raws = []
    for rec in records:
        raw = rec.copy()
        raw.responsive[Protocol.UDP53] = pipeline.raw_udp53(rec)
        raws.append(raw)
    cleaned = gfw.historical_clean(raws, [r.verdicts for r in records])
    taint = gfw.TaintState()
    for rec in cleaned:
        gfw.update_taint(taint, rec, rec.verdicts)
    gfw.write_filter_list(args.filter_output or state.gfw_filter, taint)
    with _out(args) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scan_id", "raw_udp53", "cleaned_udp53", "injected"])
        for raw, rec in zip(raws, cleaned):
            injected = sum(1 for v in rec.verdicts.values() if v.injected)
            w.writerow([rec.scan_id, len(raw.resp(Protocol.UDP53)), len(rec.resp(Protocol.UDP53)), injected])
    return 0


def _prefix_args(args) -> list[Prefix]:
    prefixes = list(read_prefix_file(args.prefixes)) if args.prefixes else []
    prefixes += [Prefix.parse(p) for p in args.prefix or ()]
    if not prefixes:
        raise CliError("give --prefixes FILE or at least one --prefix")
    return sorted(set(prefixes))


def cmd_tbt(args, cfg: RunConfig) -> int:
    engine = _engine(args, cfg)
    outcomes = [fingerprint.tbt_run(p, engine, args.scan_id, cfg.seed, cfg.rate) for p in _prefix_args(args)]
    with _out(args) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prefix", "class", "fragmented_count", "step1_ok"])
        for o in outcomes:
            w.writerow([str(o.prefix), o.label, o.fragmented_without_ptb, int(o.step1_ok)])
    return 0


def cmd_fingerprint(args, cfg: RunConfig) -> int:
    engine = _engine(args, cfg)
    rows = []
    for p in _prefix_args(args):
        reqs = [ProbeRequest(t, TcpSyn(80)) for t in apd.generate_probe_targets(p, args.scan_id, cfg.seed)]
        replies = probe_batch(engine, reqs, cfg.rate, args.scan_id)
        fps = [
            fingerprint.fingerprint_from_synack(r)
            for req in reqs
            for r in replies[req][:1]
            if isinstance(r.kind, SynAck)
        ]
        if len(fps) < 2:
            rows.append([str(p), len(fps), "insufficient", "", "", "", "", ""])
            continue
        rep = fingerprint.prefix_consistency(fps)
        rows.append([str(p), len(fps), rep.overall] + [rep.fields[f] for f in fingerprint.FP_FIELDS])
    with _out(args) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prefix", "responses", "overall"] + list(fingerprint.FP_FIELDS))
        w.writerows(rows)
    return 0


def cmd_gen_targets(args, cfg: RunConfig) -> int:
    addrs = read_addr_file(args.input)
    aliased = read_prefix_file(args.aliased) if args.aliased else []
    generated = targetgen.generate(addrs, aliased, args.min_size, args.max_gap, args.cap)
    write_addr_file(args.output, generated)
    if args.manifest:
        with open(args.manifest, "a", encoding="utf-8") as fh:
            fh.write(f"{os.path.abspath(args.output)}\tdc\n")
    print(f"{len(generated)} candidates from {len(targetgen.find_clusters(addrs, args.min_size, args.max_gap))} clusters")
    return 0


REPORT_KINDS = ("responsiveness", "as-cdf", "churn", "ledger", "overlap", "aliased-fraction", "domains", "eui64")


def cmd_report(args, cfg: RunConfig) -> int:
    kind = args.kind
    rib = _rib(cfg)
    with _out(args) as fh:
        if kind == "responsiveness":
            state = _store_dir(cfg)
            ids = state.scan_ids()
            sid = args.scan if args.scan is not None else (ids[-1] if ids else None)
            record = state.load_record(sid) if sid in ids else None
            reports.write_responsiveness(fh, reports.responsiveness_table(record, rib))
        elif kind == "as-cdf":
            if args.addrs:
                addrs = read_addr_file(args.addrs)
            else:
                state = _store_dir(cfg)
                ids = state.scan_ids()
                sid = args.scan if args.scan is not None else (ids[-1] if ids else None)
                addrs = state.load_record(sid).responsive_any() if sid in ids else state.load_store().addresses()
            as_cdf(rib, addrs).to_csv(fh)
        elif kind == "churn":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scan_id", "new_ever", "recurring", "lost"])
            for sid, c in pipeline.churn_series(_store_dir(cfg).records()):
                w.writerow([sid, c.new_ever, c.recurring, c.lost])
        elif kind == "ledger":
            state = _store_dir(cfg)
            fh.write("scan_id,stage,input,removed,output\n")
            for sid in state.scan_ids():
                path = state.scan(sid, "ledger.csv")
                if path.exists():
                    fh.writelines(path.read_text().splitlines(keepends=True)[1:])
        elif kind == "overlap":
            sets = []
            for item in args.set or ():
                name, _, path = item.partition("=")
                sets.append((name, read_addr_file(path)))
            reports.write_overlap(fh, sets, reports.overlap_matrix(sets))
        elif kind == "aliased-fraction":
            rows = reports.aliased_fraction_report(_aliased_arg(args, cfg), rib)
            reports.write_aliased_fraction(fh, rows)
        elif kind == "domains":
            if not args.resolutions:
                raise CliError("report domains needs --resolutions")
            per_prefix, per_as = reports.domains_in_aliased(
                reports.read_resolutions(args.resolutions), _aliased_arg(args, cfg), rib
            )
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scope", "key", "domains"])
            for p, n in per_prefix.items():
                w.writerow(["prefix", str(p), n])
            for asn, n in sorted(per_as.items(), key=lambda kv: (-kv[1], str(kv[0]))):
                w.writerow(["as", asn, n])
        elif kind == "eui64":
            oui = reports.read_oui_table(cfg.oui) if cfg.oui else {}
            addrs = read_addr_file(args.addrs) if args.addrs else _store_dir(cfg).load_store().addresses()
            reports.write_eui64(fh, reports.eui64_report(addrs, oui))
    return 0


def _aliased_arg(args, cfg: RunConfig) -> list[Prefix]:
    if args.aliased:
        return read_prefix_file(args.aliased)
    state = _store_dir(cfg)
    return read_prefix_file(state.aliased) if state.aliased.exists() else []


def cmd_simnet_run(args, cfg: RunConfig) -> int:
    scn = load_scenario(args.scenario_file)
    engine = SimNetwork(scn)
    state = StateDir(args.out).init()
    if state.store.exists() or state.scan_ids():
        raise CliError(f"{state.root} already holds a pipeline state")
    start = dt.date.fromisoformat(args.start_date)
    calendar = {sid: start + dt.timedelta(days=args.interval * sid) for sid in range(args.scans + 1)}
    store = CandidateStore()
    for a in sorted(scn.candidate_input()):
        store.add(a, "scenario", 0)
    pl = pipeline.Pipeline(
        store, cfg.seed, calendar, rib=_rib(cfg), blocklist=_blocklist(cfg), readmit_slices=args.readmit_slices,
        rate_limit=cfg.rate,
    )
    for sid in range(1, args.scans + 1):
        out = pl.scan(engine, sid)
        _persist_scan(state, pl, out)
    rib = pl.rib
    with open(state.root / "responsiveness.csv", "w", newline="", encoding="utf-8") as fh:
        reports.write_responsiveness(fh, reports.responsiveness_table(pl.records[-1], rib))
    with open(state.root / "churn.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scan_id", "new_ever", "recurring", "lost"])
        for sid, c in pipeline.churn_series(pl.records):
            w.writerow([sid, c.new_ever, c.recurring, c.lost])
    as_cdf(rib, pl.records[-1].responsive_any()).write_csv(state.root / "as_cdf.csv")
    aliased = read_prefix_file(state.aliased)
    tbt = [fingerprint.tbt_run(p, engine, args.scans + 1, cfg.seed) for p in sorted(aliased) if p.length <= 125]
    fingerprint.write_tbt_log(state.root / "tbt.csv", tbt)
    print(f"{args.scans} scans written to {state.root}")
    return 0


# Parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hitlist6", description="IPv6 hitlist pipeline over simulated or live networks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="add candidate files listed in a manifest to the store")
    p.add_argument("manifest", help="lines of '<file><TAB><source label>'")
    _add(p, "--store", required=True)
    _add(p, "--scan-id", type=int, default=0, help="scan id recorded as first_seen")
    _add(p, "--date", help="ISO date of that scan id, added to the scan calendar")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("apd", help="one aliased-prefix detection round over the store")
    _add(p, "--store", required=True)
    _add(p, "--rib")
    _add(p, "--scan-id", type=int, required=True)
    _common_engine_flags(p)
    p.add_argument("-o", "--output", help="also write the aliased prefix list here")
    p.set_defaults(func=cmd_apd)

    p = sub.add_parser("scan", help="run every pipeline stage and one five-protocol scan")
    _add(p, "--store", required=True)
    _add(p, "--rib")
    _add(p, "--blocklist")
    _add(p, "--scan-id", type=int, required=True)
    _add(p, "--date", help="ISO date of this scan for the 30-day filter")
    _add(p, "--readmit-slices", type=int, default=pipeline.READMIT_SLICES)
    _common_engine_flags(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("gfw-clean", help="clean stored UDP53 results and export the filter list")
    _add(p, "--store", required=True)
    p.add_argument("--filter-output", help="filter list path (default: <store>/gfw_filter.txt)")
    p.add_argument("-o", "--output", help="per-scan counts CSV (default: stdout)")
    p.set_defaults(func=cmd_gfw_clean)

    for name, func, helptext in (
        ("tbt", cmd_tbt, "Too-Big-Trick path-MTU alias test"),
        ("fingerprint", cmd_fingerprint, "TCP fingerprint consistency across a prefix"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--prefixes", help="file with one prefix per line")
        p.add_argument("--prefix", action="append", help="prefix to test (repeatable)")
        _add(p, "--scan-id", type=int, required=True)
        _add(p, "--blocklist")
        _common_engine_flags(p)
        p.add_argument("-o", "--output")
        p.set_defaults(func=func)

    p = sub.add_parser("gen-targets", help="distance-clustering candidate generation")
    p.add_argument("--input", required=True, help="responsive addresses")
    p.add_argument("--aliased", help="aliased prefix list to exclude")
    p.add_argument("--min-size", type=int, default=targetgen.MIN_SIZE)
    p.add_argument("--max-gap", type=int, default=targetgen.MAX_GAP)
    p.add_argument("--cap", type=int, default=targetgen.SPAN_CAP, help="maximum span per cluster")
    p.add_argument("--manifest", help="append '<output><TAB>dc' to this ingestion manifest")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_targets)

    p = sub.add_parser("report", help="write a report as CSV")
    p.add_argument("kind", choices=REPORT_KINDS)
    _add(p, "--store")
    _add(p, "--rib")
    _add(p, "--oui")
    p.add_argument("--scan", type=int)
    p.add_argument("--addrs", help="address file instead of store/scan data")
    p.add_argument("--aliased", help="aliased prefix list (default: <store>/aliased.txt)")
    p.add_argument("--resolutions", help="'<domain><TAB><address>' file")
    p.add_argument("--set", action="append", help="NAME=FILE address set for overlap (repeatable)")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("simnet-run", help="full multi-scan pipeline run over a scenario")
    p.add_argument("scenario_file")
    _add(p, "--seed", type=int, required=True)
    _add(p, "--scans", type=int, default=5)
    _add(p, "--out", required=True)
    _add(p, "--rib")
    _add(p, "--blocklist")
    _add(p, "--rate", type=float, default=10_000.0)
    _add(p, "--in-flight", type=int, default=1)
    _add(p, "--start-date", default="2022-01-01")
    _add(p, "--interval", type=int, default=7, help="days between scans")
    _add(p, "--readmit-slices", type=int, default=pipeline.READMIT_SLICES)
    p.set_defaults(func=cmd_simnet_run)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = RunConfig.from_args(args)
    try:
        return args.func(args, cfg)
    except EthicsRefusal as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except (CliError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
