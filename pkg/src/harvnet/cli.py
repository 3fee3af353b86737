"""Command-line entry point: ``harvnet {ingest-report,cluster,validate,synth,export}``.

Exit codes: 0 success, 1 pipeline error, 2 empty month window, 64 usage.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path


from . import __version__
from .errors import ConfigError, EmptyWindowError, HarvnetError
from .graph import write_edge_list
from .ingest import month_key, monthly_volume_report, read_event_log, window_by_month
from .phishing import load_keywords, phishing_level_histogram, phishing_profiles
from .pipeline import PipelineConfig, build_graph, cluster_window, report_for_result, validation_report
from .similarity import (
    SERVER_USAGE,
    TEMPORAL,
    coincidence,
    dump_matrices,
    load_coincidence_dump,
    similarity_from_coincidence,
    temporal_coincidence,
)
from .synth import GroundTruth, ScenarioConfig, generate_scenario, write_scenario

log = logging.getLogger("harvnet")

EXIT_OK, EXIT_PIPELINE, EXIT_EMPTY, EXIT_USAGE = 0, 1, 2, 64

CONFIG_KEYS = {
    "similarity": str, "month": str, "k": str, "K": str, "keywords": str,
    "min_component_size": int, "lambda_floor": float, "eig_tol": float,
    "max_clusters": int, "prefix_bits": int, "threads": int, "out": str,
    "dump_matrices": str, "seed": int, "format": str,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{n}: unknown config key {key!r}")
            try:
                values[key] = CONFIG_KEYS[key](value)
            except ValueError as exc:
                raise UsageError(f"{path}:{n}: {exc}") from exc
    return values


def _auto_or_int(text):
    if text == "auto":
        return "auto"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _month(text):
    try:
        return month_key(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")


def _require_file(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what} {path} does not exist")


def _pipeline_config(args) -> PipelineConfig:
    if args.month is None:
        raise UsageError("--month is required (flag or config file)")
    return PipelineConfig(
        similarity=args.similarity, month=args.month, k=args.k, K=args.K,
        keywords=args.keywords, min_component_size=args.min_component_size,
        lambda_floor=args.lambda_floor, eig_tol=args.eig_tol, max_clusters=args.max_clusters,
        prefix_bits=args.prefix_bits, threads=args.threads, out=args.out,
        dump_matrices=args.dump_matrices,
    )


def _load_window(args):
    _require_file(args.log, "event log")
    if args.keywords:
        _require_file(args.keywords, "keyword file")
    events = read_event_log(args.log, args.format)
    if events.malformed:
        log.warning("%d malformed lines skipped", len(events.malformed))
    return window_by_month(events, args.month)


def _manifest(command, config: PipelineConfig, inputs, extra) -> dict:
    return {
        "tool": "harvnet",
        "version": __version__,
        "command": command,
        "config": {k: v for k, v in vars(config).items()},
        "inputs": {str(Path(p).name): _sha256(p) for p in inputs if p},
        **extra,
    }


def write_cluster_csv(path, harvester_ips, component_ids, cluster_ids) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["harvester_ip", "component_id", "cluster_id"])
        for ip, comp, cid in zip(harvester_ips, component_ids, cluster_ids):
            writer.writerow([ip, int(comp), int(cid)])


def read_cluster_csv(path) -> tuple[list[str], list[int], list[int]]:
    ips, comps, clusters = [], [], []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"harvester_ip", "cluster_id"} - set(reader.fieldnames or ())
        if missing:
            raise HarvnetError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            ips.append(row["harvester_ip"])
            comps.append(int(row.get("component_id") or 0))
            clusters.append(int(row["cluster_id"]))
    return ips, comps, clusters


def cmd_cluster(args) -> int:
    config = _pipeline_config(args)
    keywords = load_keywords(config.keywords)
    window = _load_window(args)
    result = cluster_window(window, config, keywords)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    part = result.partition
    write_cluster_csv(out / "clusters.csv", result.harvester_ips, part.component_ids, part.assignments)
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        if result.graph is not None:
            write_edge_list(result.graph, result.harvester_ips, fh)
    report = report_for_result(result, config.prefix_bits)
    _write_json(out / "report.json", report.to_dict())
    if config.dump_matrices:
        dump_matrices(config.dump_matrices, result.H, result.similarity)
        if result.H.kind != TEMPORAL:
            dump_matrices(config.dump_matrices, temporal_coincidence(window))
    extra = {
        "month": window.month,
        "harvesters": window.M,
        "servers": window.N,
        "events": len(window.events),
        "k": result.graph.k if result.graph is not None else 0,
        "k_connectivity_ok": result.k_connected,
        "clusters": part.K,
        "eigengap_K": {str(c): k for c, k in sorted(part.chosen_K.items())},
        "outputs": ["clusters.csv", "edges.tsv", "report.json"],
    }
    _write_json(out / "run_manifest.json", _manifest("cluster", config, [args.log, config.keywords], extra))
    if not result.k_connected:
        log.warning("k reached its maximum without restoring connectivity")
    print(f"{window.M} harvesters, k={extra['k']}, {part.K} clusters -> {out}")
    return EXIT_OK


def cmd_export(args) -> int:
    config = _pipeline_config(args)
    window = _load_window(args)
    H = coincidence(window, config.similarity)
    sim = similarity_from_coincidence(H)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w", encoding="utf-8") as fh:
        if window.M >= 2:
            graph, _ = build_graph(sim.S_prime, config.k)
            write_edge_list(graph, window.harvester_ips, fh)
    if config.dump_matrices:
        dump_matrices(config.dump_matrices, H, sim)
    print(f"edge list for {window.M} harvesters -> {out / 'edges.tsv'}")
    return EXIT_OK


def _read_addresses(path) -> dict[str, int]:
    counts = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            counts[month_key(row["month"])] = int(row["addresses"])
    return counts


def cmd_ingest_report(args) -> int:
    _require_file(args.log, "event log")
    events = read_event_log(args.log, args.format)
    if args.addresses:
        _require_file(args.addresses, "address counts")
        addresses = _read_addresses(args.addresses)
    else:
        addresses = {}
        for ev in events:
            addresses[ev.month] = addresses.get(ev.month, 0) + ev.addresses_acquired_delta
    keywords = load_keywords(args.keywords)
    months = sorted({ev.month for ev in events})
    payload = {
        "events": len(events),
        "malformed_lines": [{"line": n, "reason": why} for n, why in events.malformed],
        "volume": [{"month": m, "emails_per_address": r}
                   for m, r in monthly_volume_report(events, addresses)],
        "months": {},
    }
    for m in months:
        window = window_by_month(events, m)
        profiles = phishing_profiles(window, keywords)
        payload["months"][m] = {
            "events": len(window.events),
            "harvesters": window.M,
            "servers": window.N,
            "phishers": sum(p.is_phisher for p in profiles),
            "phishing_level_histogram": [
                {"low": lo, "high": hi, "count": n}
                for lo, hi, n in phishing_level_histogram(profiles, args.bin_width)
            ],
        }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "ingest_report.json").write_text(text, "utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _read_labels(path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["harvester_ip"]: row["label"] for row in csv.DictReader(fh)}


def cmd_validate(args) -> int:
    _require_file(args.clusters, "cluster CSV")
    ips, _, assignments = read_cluster_csv(args.clusters)
    phisher_flags = None
    groups = {}
    if args.ground_truth:
        _require_file(args.ground_truth, "ground truth")
        truth = GroundTruth.from_dict(json.loads(Path(args.ground_truth).read_text("utf-8")))
        source = dict(zip(truth.harvesters, truth.community if args.against == "community" else truth.phisher))
        phisher = dict(zip(truth.harvesters, truth.phisher))
        groups = {f"group:{gid}": members for gid, members in truth.groups().items()}
    else:
        source = _read_labels(args.labels)
        phisher = None
        if set(source.values()) <= {"phisher", "non-phisher"}:
            phisher = {ip: lab == "phisher" for ip, lab in source.items()}
    for ip in ips:
        if ip not in source:
            raise HarvnetError(f"harvester {ip} is in the cluster file but has no label")
    clustered = set(ips)
    for ip in source:
        if ip not in clustered:
            raise HarvnetError(f"harvester {ip} has a label but is missing from the cluster file")
    labels = [source[ip] for ip in ips]
    if phisher is not None:
        phisher_flags = [phisher[ip] for ip in ips]

    H_temporal = None
    if args.temporal:
        H_temporal = load_coincidence_dump(args.temporal, TEMPORAL)
    report = validation_report(assignments, ips, labels=labels, phisher_flags=phisher_flags,
                               H_temporal=H_temporal, extra_groups=groups, prefix_bits=args.prefix_bits)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, "utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    data = {}
    if args.scenario:
        _require_file(args.scenario, "scenario config")
        try:
            data = json.loads(Path(args.scenario).read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{args.scenario}: invalid JSON ({exc})") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    try:
        config = ScenarioConfig.from_dict(data)
    except ConfigError as exc:
        raise UsageError(f"invalid scenario: {exc}") from exc
    events, truth = generate_scenario(config)
    log_path, truth_path = write_scenario(events, truth, config, args.out)
    print(f"{len(events)} events, {len(truth.harvesters)} harvesters -> {log_path}, {truth_path}")
    return EXIT_OK


def _add_pipeline_args(p, defaults):
    p.add_argument("log", help="event log (.csv or .jsonl)")
    p.add_argument("--format", choices=["csv", "jsonl"], default=defaults.get("format"))
    p.add_argument("--month", type=_month, default=defaults.get("month"), help="YYYY-MM")
    p.add_argument("--similarity", choices=[SERVER_USAGE, TEMPORAL],
                   default=defaults.get("similarity", SERVER_USAGE))
    p.add_argument("--k", type=_auto_or_int, default=str(defaults.get("k", "auto")),
                   help="starting neighbor count, or 'auto' for ceil(ln M)")
    p.add_argument("--keywords", default=defaults.get("keywords"), help="phishing keyword file")
    p.add_argument("--out", default=defaults.get("out", "out"))
    p.add_argument("--dump-matrices", default=defaults.get("dump_matrices"), metavar="DIR")
    p.add_argument("--threads", type=int, default=defaults.get("threads", 1))
    p.add_argument("--K", type=_auto_or_int, default=str(defaults.get("K", "auto")))
    p.add_argument("--min-component-size", type=int, default=defaults.get("min_component_size", 10))
    p.add_argument("--lambda-floor", type=float, default=defaults.get("lambda_floor", 0.5))
    p.add_argument("--eig-tol", type=float, default=defaults.get("eig_tol", 1e-8))
    p.add_argument("--max-clusters", type=int, default=defaults.get("max_clusters", 100))
    p.add_argument("--prefix-bits", type=int, default=defaults.get("prefix_bits", 24))


def build_parser(defaults=None) -> argparse.ArgumentParser:
    defaults = defaults or {}
    parser = _Parser(prog="harvnet", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"harvnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cluster", help="cluster one month of harvesters")
    _add_pipeline_args(p, defaults)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("export", help="write the k-NN edge list (and matrices) without clustering")
    _add_pipeline_args(p, defaults)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("ingest-report", help="monthly volume and phishing-level summary")
    p.add_argument("log")
    p.add_argument("--format", choices=["csv", "jsonl"], default=defaults.get("format"))
    p.add_argument("--addresses", help="CSV with month,addresses columns")
    p.add_argument("--keywords", default=defaults.get("keywords"))
    p.add_argument("--bin-width", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest_report)

    p = sub.add_parser("validate", help="score a cluster CSV against labels")
    p.add_argument("clusters", help="cluster CSV from 'harvnet cluster'")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--ground-truth", help="ground_truth.json from 'harvnet synth'")
    src.add_argument("--labels", help="CSV with harvester_ip,label")
    p.add_argument("--against", choices=["community", "phisher"], default="community",
                   help="ground-truth field to compare with (default: community)")
    p.add_argument("--temporal", metavar="DIR", help="matrix dump directory with H_temporal")
    p.add_argument("--prefix-bits", type=int, default=defaults.get("prefix_bits", 24))
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic event log with planted communities")
    p.add_argument("--scenario", help="scenario JSON (defaults used for missing keys)")
    p.add_argument("--seed", type=int, default=defaults.get("seed"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        defaults = read_config_file(known.config) if known.config else {}
    except (OSError, UsageError) as exc:
        print(f"harvnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        args = build_parser(defaults).parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"harvnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EmptyWindowError as exc:
        print(f"harvnet: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (HarvnetError, ValueError, OSError) as exc:
        print(f"harvnet: error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
