"""Command-line interface: ``asqm {score,fit,simulate,scenarios,pf,prefs}``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from pathlib import Path

from . import __version__
from .config import CONFIG_ENV_VAR, ModelConstants, load_constants, load_weights
from .errors import AsqmError, ConfigError, NotFoundError
from .fit import (
    DatasetRow,
    aggregate_observations,
    fit,
    observations_from_rows,
    read_dataset,
    write_dataset,
)
from .gesim import GEChannel, StreamConfig, ge_trace, simulate_playout, trace_to_text
from .model import codec_quality, evaluate, normalize_category, preference_factor
from .prefstore import CATEGORY_PRESETS, AudioRecord, PreferenceStore, UserProfile
from .telemetry import (
    SessionHeader,
    dump_session,
    generate_scenarios,
    load_session,
    scenario_to_session,
    summarize,
)

SCORE_COLUMNS = ("session_id", "audio_id", "user_id", "category", "codec", "bitrate_kbps",
                 "media_len", "initial_delay", "stalls_a", "stalls_b", "stalls_c",
                 "q_a", "i_d", "i_s", "asqm1", "pf_branch", "pf", "asqm")


def _warn(msg: str) -> None:
    print(f"asqm: warning: {msg}", file=sys.stderr)


def _num(x) -> str:
    return repr(float(x)) if isinstance(x, float) else str(x)


def _emit_tsv(columns, rows, out=None) -> None:
    writer = csv.writer(out or sys.stdout, delimiter="\t", lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_num(row[c]) for c in columns])


def _constants(args) -> ModelConstants:
    constants = load_constants(args.config)
    pf_mode = getattr(args, "pf_mode", None)
    if pf_mode:
        constants = ModelConstants(constants.codecs, constants.scale, constants.delay,
                                   constants.preference.with_mode(pf_mode), constants.weights)
    return constants


# -- score ------------------------------------------------------------------

def _preferences(args, header: SessionHeader):
    """Return (user_prefs or None, content category)."""
    category = header.category
    store = PreferenceStore(args.prefs) if args.prefs else None
    if store is not None:
        try:
            category = store.get_audio(header.audio_id).category
        except NotFoundError:
            pass
    if not args.user:
        _warn(f"{header.session_id}: no user given, scoring without preference (PF = 1)")
        return None, category
    if store is None:
        _warn(f"{header.session_id}: no preference store given, scoring without preference (PF = 1)")
        return None, category
    try:
        return store.get_profile(args.user).preferred_categories, category
    except NotFoundError:
        _warn(f"user {args.user!r} not in preference store, scoring without preference (PF = 1)")
        return None, category


def cmd_score(args) -> int:
    constants = _constants(args)
    weights = load_weights(args.weights) if args.weights else constants.weights
    if not weights.calibrated:
        _warn("using uncalibrated segment weights; pass --weights from 'asqm fit' for calibrated ones")
    rows = []
    for path in args.session_logs:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
        session = load_session(text)
        header = session.header
        if header is None:
            raise ConfigError(f"{path}: session log has no header record")
        summary = summarize(session.events, header.media_len)
        prefs, category = _preferences(args, header)
        report = evaluate(constants.codec(header.codec), header.bitrate_kbps, summary, weights,
                          constants.preference, prefs, category,
                          delay_model=constants.delay, scale=constants.scale)
        rows.append({
            "session_id": header.session_id, "audio_id": header.audio_id,
            "user_id": args.user or "", "category": normalize_category(category),
            "codec": header.codec, "bitrate_kbps": header.bitrate_kbps,
            "media_len": header.media_len, "initial_delay": summary.initial_delay,
            "stalls_a": summary.stalls[0], "stalls_b": summary.stalls[1],
            "stalls_c": summary.stalls[2],
            "q_a": report.q_a, "i_d": report.i_d, "i_s": report.i_s, "asqm1": report.asqm1,
            "pf_branch": report.pf_branch, "pf": report.pf, "asqm": report.asqm,
        })
    if args.format == "tsv":
        _emit_tsv(SCORE_COLUMNS, rows)
    else:
        for r in rows:
            print(f"session {r['session_id']}  audio {r['audio_id']} ({r['category']}, "
                  f"{r['codec']} @ {r['bitrate_kbps']:g} kbps, {r['media_len']:g} s)")
            print(f"  stalls A/B/C  {r['stalls_a']}/{r['stalls_b']}/{r['stalls_c']}"
                  f"   initial delay {r['initial_delay']:.3f} s")
            for key, label in (("q_a", "Q_A"), ("i_d", "I_D"), ("i_s", "I_S"), ("asqm1", "AsQM1")):
                print(f"  {label:<6} {r[key]:.4f}")
            print(f"  PF     {r['pf']:.4f} ({r['pf_branch']})")
            print(f"  AsQM   {r['asqm']:.4f}")
    return 0


# -- fit --------------------------------------------------------------------

def cmd_fit(args) -> int:
    observations = observations_from_rows(read_dataset(args.dataset))
    if args.aggregate:
        observations = aggregate_observations(observations)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = fit(observations)
    for w in caught:
        _warn(str(w.message))
    doc = report.to_dict()
    if args.output:
        Path(args.output).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if args.format == "tsv":
        _emit_tsv(tuple(doc), [doc])
    else:
        w = report.weights
        print(f"fitted {report.n_observations} observations (rank {report.rank}, "
              f"condition {report.condition_estimate:.3g})")
        print(f"  ln C  {w.ln_c:+.6f}   (C = {math.exp(w.ln_c):.4f})")
        print(f"  D_A   {w.d_a:+.6f}")
        print(f"  D_B   {w.d_b:+.6f}")
        print(f"  D_C   {w.d_c:+.6f}")
        print(f"  residual RMS {report.residual_rms:.3g} MOS ({report.log_residual_rms:.3g} log-MOS)")
        if args.output:
            print(f"weights written to {args.output}")
    return 0


# -- simulate ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = StreamConfig(args.bitrate, args.media_len, args.bandwidth_pct, args.packet_size,
                       args.loss_penalty, args.startup, args.rebuffer, args.startup_timeout)
    channel = GEChannel(args.p, args.r, args.seed, "stationary" if args.stationary_start else "good")
    trace = simulate_playout(cfg, channel)
    header = SessionHeader(args.session_id or f"sim-{args.seed}", args.audio_id, args.category,
                           args.codec, args.bitrate, args.media_len)
    log = dump_session(trace.to_events(), header)
    stats_out = sys.stdout
    if args.output == "-":
        sys.stdout.write(log)
        stats_out = sys.stderr
    else:
        Path(args.output).write_text(log, encoding="utf-8")
    if args.loss_trace:
        Path(args.loss_trace).write_text(trace_to_text(ge_trace(channel, cfg.packet_count)),
                                         encoding="utf-8")
    ls = trace.loss_stats
    row = {"packets": ls.packets, "losses": ls.losses, "empirical_plr": ls.empirical_plr,
           "mean_burst": ls.mean_burst, "initial_delay": trace.initial_delay,
           "stalls": len(trace.stalls), "total_stall_time": trace.total_stall_time,
           "end_time": trace.end_time}
    if args.format == "tsv":
        _emit_tsv(tuple(row), [row], stats_out)
    else:
        print(f"packets {ls.packets}, lost {ls.losses} (PLR {ls.empirical_plr:.4%}, "
              f"mean burst {ls.mean_burst:.2f})", file=stats_out)
        print(f"initial delay {trace.initial_delay:.3f} s, {len(trace.stalls)} stalls, "
              f"{trace.total_stall_time:.3f} s stalled, session ends at {trace.end_time:.3f} s",
              file=stats_out)
    return 0


# -- scenarios --------------------------------------------------------------

def cmd_scenarios(args) -> int:
    constants = _constants(args)
    weights = load_weights(args.weights) if args.weights else constants.weights
    profile = constants.codec(args.codec)
    bitrate = args.bitrate if args.bitrate is not None else profile.br_max
    q_a = codec_quality(profile, bitrate, constants.scale)
    scenarios = generate_scenarios(args.seed, args.media_len, args.models, args.initial_delay_level)

    out = Path(args.out_dir)
    (out / "sessions").mkdir(parents=True, exist_ok=True)
    rows = []
    for sc in scenarios:
        summary = sc.summary()
        exponent = sum(x * d for x, d in zip(summary.features, weights.degradation))
        mos = math.exp(weights.ln_c + exponent)
        rows.append(DatasetRow.from_summary(sc.model_id, summary, q_a, mos))
        header = SessionHeader(f"{sc.model_id}-seed{args.seed}", f"{sc.model_id}-{args.category}",
                               args.category, profile.name, bitrate, sc.media_len)
        (out / "sessions" / f"{sc.model_id}.jsonl").write_text(
            dump_session(scenario_to_session(sc), header), encoding="utf-8")
    write_dataset(rows, out / "corpus.csv")
    print(f"{len(scenarios)} scenarios written to {out}/corpus.csv and {out}/sessions/")
    return 0


# -- pf ---------------------------------------------------------------------

def cmd_pf(args) -> int:
    constants = _constants(args)
    pf = preference_factor(constants.preference, args.category, args.mos, args.preference)
    if args.format == "tsv":
        _emit_tsv(("category", "mos", "preference", "mode", "pf"),
                  [{"category": normalize_category(args.category), "mos": args.mos,
                    "preference": int(args.preference), "mode": constants.preference.mode,
                    "pf": pf}])
    else:
        print(f"{pf:.6f}")
    return 0


# -- prefs ------------------------------------------------------------------

def cmd_prefs(args) -> int:
    if not args.prefs:
        raise ConfigError("--prefs is required for preference store commands")
    categories = CATEGORY_PRESETS[args.preset] if args.preset else None
    store = PreferenceStore(args.prefs, categories)
    if args.prefs_cmd == "set-user":
        cats = [c for c in args.categories.split(",") if c.strip()] if args.categories else []
        version = store.upsert_profile(UserProfile(args.user_id, cats))
        print(f"user {args.user_id} stored (version {version})")
    elif args.prefs_cmd == "set-audio":
        version = store.upsert_audio(AudioRecord(args.audio_id, args.category, args.media_len,
                                                 args.codec, args.bitrate))
        print(f"audio {args.audio_id} stored (version {version})")
    elif args.prefs_cmd == "check":
        print("yes" if store.has_preference(args.user_id, args.audio_id) else "no")
    elif args.prefs_cmd == "export":
        print(json.dumps(store.export(), indent=2, sort_keys=True))
    elif args.prefs_cmd == "import":
        try:
            doc = json.loads(Path(args.document).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load {args.document}: {exc}") from None
        store.import_document(doc)
        print(f"store replaced from {args.document}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"model constants JSON (default: ${CONFIG_ENV_VAR} or built-ins)")
    common.add_argument("--format", choices=("human", "tsv"), default="human")

    parser = argparse.ArgumentParser(prog="asqm", description="Audio streaming quality model tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", parents=[common], help="score session logs")
    p.add_argument("session_logs", nargs="+")
    p.add_argument("--user", help="user id for the preference lookup")
    p.add_argument("--prefs", help="preference store path")
    p.add_argument("--weights", help="weights JSON from 'asqm fit'")
    p.add_argument("--pf-mode", choices=("consistent", "literal"))
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("fit", parents=[common], help="fit segment weights to a dataset")
    p.add_argument("dataset")
    p.add_argument("-o", "--output", help="write weights JSON here")
    p.add_argument("--aggregate", action="store_true",
                   help="average rows sharing model_id and q_a before fitting")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", parents=[common], help="simulate a lossy, throttled session")
    p.add_argument("--bitrate", type=float, default=128.0, help="media bitrate, kbps")
    p.add_argument("--media-len", type=float, default=60.0)
    p.add_argument("--bandwidth-pct", type=float, default=100.0)
    p.add_argument("--p", type=float, default=0.0, help="P(good -> bad)")
    p.add_argument("--r", type=float, default=1.0, help="P(bad -> good)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--packet-size", type=int, default=1316)
    p.add_argument("--loss-penalty", type=float, default=0.2)
    p.add_argument("--startup", type=float, default=2.0)
    p.add_argument("--rebuffer", type=float, default=2.0)
    p.add_argument("--startup-timeout", type=float, default=3600.0)
    p.add_argument("--stationary-start", action="store_true")
    p.add_argument("--codec", default="AAC-LC")
    p.add_argument("--category", default="music")
    p.add_argument("--audio-id", default="simulated")
    p.add_argument("--session-id")
    p.add_argument("-o", "--output", default="-", help="session log path ('-' for stdout)")
    p.add_argument("--loss-trace", help="write the per-packet loss trace here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scenarios", parents=[common], help="generate the impairment-model corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--media-len", type=float, default=60.0)
    p.add_argument("--models", help="e.g. M1,M5-M9 (default: all 53)")
    p.add_argument("--initial-delay-level", choices=("L", "M", "H"))
    p.add_argument("--codec", default="AAC-LC")
    p.add_argument("--bitrate", type=float)
    p.add_argument("--category", default="music")
    p.add_argument("--weights", help="weights used to synthesize the corpus MOS")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("pf", parents=[common], help="evaluate the preference factor")
    p.add_argument("--category", required=True)
    p.add_argument("--mos", type=float, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--preference", dest="preference", action="store_true")
    group.add_argument("--no-preference", dest="preference", action="store_false")
    p.add_argument("--pf-mode", choices=("consistent", "literal"))
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("prefs", parents=[common], help="manage the preference store")
    p.add_argument("--prefs", help="preference store path")
    p.add_argument("--preset", choices=tuple(CATEGORY_PRESETS),
                   help="category vocabulary for a new store")
    psub = p.add_subparsers(dest="prefs_cmd", required=True)
    q = psub.add_parser("set-user")
    q.add_argument("user_id")
    q.add_argument("--categories", default="", help="comma-separated preferred categories")
    q = psub.add_parser("set-audio")
    q.add_argument("audio_id")
    q.add_argument("--category", required=True)
    q.add_argument("--media-len", type=float, required=True)
    q.add_argument("--codec", default="AAC-LC")
    q.add_argument("--bitrate", type=float, required=True)
    q = psub.add_parser("check")
    q.add_argument("user_id")
    q.add_argument("audio_id")
    psub.add_parser("export")
    q = psub.add_parser("import")
    q.add_argument("document")
    p.set_defaults(func=cmd_prefs)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AsqmError as exc:
        print(f"asqm: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
