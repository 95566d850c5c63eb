"""Command-line entry point: ingest, train, simulate, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from .features import (
    FeatureError,
    correlation_with_goals,
    fit_player_scaler,
    fit_team_scaler,
    player_training_samples,
    team_training_samples,
)
from .ingest import (
    Corpus,
    IngestError,
    generate_synthetic_corpus,
    load_corpus,
    parse_team_matches,
    serialize_player_matches,
    serialize_team_matches,
    validate_corpus,
)
from .simulator import (
    DISTRIBUTION_METRICS,
    ModelBundle,
    SimulationError,
    distribution_csv,
    legs_csv,
    load_bracket,
    narrative,
    simulate_bracket,
    win_frequency_csv,
)

log = logging.getLogger("knockout_dae")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRAIN = 3
EXIT_SIMULATE = 4

TEAM_MODEL_FILE = "team_model.json"
PLAYER_MODEL_FILE = "player_model.json"


class InputError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _corpus_from_args(args) -> Corpus:
    for flag in ("team_csv", "player_csv"):
        value = getattr(args, flag, None)
        if not value:
            raise InputError(f"--{flag.replace('_', '-')} is required")
        if not Path(value).is_file():
            raise InputError(f"{value}: no such file")
    corpus, stats = load_corpus(args.team_csv, args.player_csv)
    for w in stats.warnings:
        log.warning(w)
    return corpus


# --------------------------------------------------------------------------- subcommands


def cmd_ingest(args) -> int:
    if args.synthetic:
        team_rows, player_rows = generate_synthetic_corpus(
            args.seed, args.n_teams, args.n_matches, args.players_per_team
        )
        stats = validate_corpus(team_rows, player_rows)
    else:
        corpus = _corpus_from_args(args)
        team_rows, player_rows = list(corpus.team_rows), list(corpus.player_rows)
        stats = validate_corpus(team_rows, player_rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    serialize_team_matches(team_rows, out / "team_matches.csv")
    serialize_player_matches(player_rows, out / "player_matches.csv")
    _write(out / "corpus_stats.json", json.dumps(stats.to_dict(), indent=1) + "\n")
    print(f"matches: {stats.n_matches}  team rows: {stats.n_team_rows}  player rows: {stats.n_player_rows}")
    print(f"teams: {len(stats.teams)}  players: {len(stats.players)}  seasons: {', '.join(sorted(stats.seasons))}")
    print(f"warnings: {len(stats.warnings)}")
    return EXIT_OK


def _train_config(args) -> ae.TrainConfig:
    defaults = ae.TrainConfig()
    return ae.TrainConfig(
        learning_rate=defaults.learning_rate if args.lr is None else args.lr,
        batch_size=defaults.batch_size if args.batch is None else args.batch,
        epochs=defaults.epochs if args.epochs is None else args.epochs,
        noise_sigma=defaults.noise_sigma if args.sigma is None else args.sigma,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    corpus = _corpus_from_args(args)
    try:
        config = _train_config(args)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    team_scaler = fit_team_scaler(corpus)
    player_scaler = fit_player_scaler(corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for kind, samples, scaler, filename in (
        ("team", team_training_samples(corpus, team_scaler), team_scaler, TEAM_MODEL_FILE),
        ("player", player_training_samples(corpus, team_scaler, player_scaler), player_scaler, PLAYER_MODEL_FILE),
    ):
        model = ae.train(samples, config, kind=kind, scaler=scaler)
        ae.save_model(model, out / filename)
        train_rmse, val_rmse = model.best_rmse
        val = "n/a" if val_rmse is None else f"{val_rmse:.4f}"
        print(f"{kind} model: {len(samples)} samples, train RMSE {train_rmse:.4f}, val RMSE {val} -> {out / filename}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    corpus = _corpus_from_args(args)
    models_dir = Path(args.models or args.out)
    paths = [models_dir / TEAM_MODEL_FILE, models_dir / PLAYER_MODEL_FILE]
    for p in paths:
        if not p.is_file():
            raise InputError(f"{p}: model artifact not found (run `train` first)")
    if not args.bracket or not Path(args.bracket).is_file():
        raise InputError("--bracket must name an existing bracket.json")
    team_model, player_model = (ae.load_model(p) for p in paths)
    state = load_bracket(args.bracket, corpus, seed=args.seed)
    bundle = ModelBundle.from_corpus(team_model, player_model, corpus, sigma=args.sigma)
    report = simulate_bracket(state, bundle, runs=args.runs, seed=args.seed)

    out = Path(args.out)
    _write(out / "report.json", report.to_json())
    _write(out / "legs.csv", legs_csv(report))
    _write(out / "distribution.csv", distribution_csv(report.distributions))
    if report.win_frequencies is not None:
        _write(out / "win_frequencies.csv", win_frequency_csv(report.win_frequencies))
    for line in narrative(report.runs[0]):
        print(line)
    print()
    for line in report.fixture_chain():
        print(line)
    if report.win_frequencies is not None:
        print(f"\nwin frequencies over {args.runs} runs:")
        for team, f in sorted(report.win_frequencies.items(), key=lambda kv: (-kv[1], kv[0])):
            print(f"  {team:<24} {f:.3f}")
    print(f"champion: {report.champion}")
    return EXIT_OK


def _read_distribution(path: Path) -> dict:
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["team"], {}).setdefault(row["metric"], []).append(float(row["value"]))
    return out


def _summary_rows(source: str, dist: dict, teams) -> list[tuple]:
    rows = []
    for team in teams:
        for metric in DISTRIBUTION_METRICS:
            values = np.array(dist.get(team, {}).get(metric, []), dtype=float)
            mean = repr(float(values.mean())) if values.size else ""
            std = repr(float(values.std())) if values.size else ""
            rows.append((source, team, metric, values.size, mean, std))
    return rows


def cmd_report(args) -> int:
    if not args.team_csv and not args.sim:
        raise InputError("report needs --team-csv and/or --sim")
    out = Path(args.out)
    summary = []

    if args.team_csv:
        if not Path(args.team_csv).is_file():
            raise InputError(f"{args.team_csv}: no such file")
        team_rows = parse_team_matches(args.team_csv)
        if not team_rows:
            raise InputError(f"{args.team_csv} has no rows")
        ranked = correlation_with_goals(team_rows)
        lines = ["feature,r"] + [f"{name},{'' if r is None else repr(r)}" for name, r in ranked]
        _write(out / "correlations.csv", "\n".join(lines) + "\n")
        print("correlation with goals:")
        for name, r in ranked:
            print(f"  {name:<22} {'undefined' if r is None else f'{r:+.4f}'}")
        train_dist: dict = {}
        for r in team_rows:
            per_team = train_dist.setdefault(r.team, {m: [] for m in DISTRIBUTION_METRICS})
            for metric in DISTRIBUTION_METRICS:
                per_team[metric].append(getattr(r, metric))
        train_dist = dict(sorted(train_dist.items()))
        _write(out / "training_distribution.csv", distribution_csv(train_dist))
        summary += _summary_rows("training", train_dist, train_dist)

    if args.sim:
        sim = Path(args.sim)
        dist_path, report_path = sim / "distribution.csv", sim / "report.json"
        if not dist_path.is_file() or not report_path.is_file():
            raise InputError(f"{sim}: no simulation output (expected distribution.csv and report.json)")
        sim_dist = _read_distribution(dist_path)
        report = json.loads(report_path.read_text(encoding="utf-8"))
        teams = sorted({t for fx in report["runs"][0]["fixtures"] for t in (fx["team_a"], fx["team_b"])})
        _write(out / "simulated_distribution.csv", dist_path.read_text(encoding="utf-8"))
        summary += _summary_rows("simulation", sim_dist, teams)
        print(f"simulation: {report['n_runs']} run(s), champion {report['champion']}, teams: {', '.join(teams)}")

    lines = ["source,team,metric,n,mean,std"] + [",".join(str(v) for v in row) for row in summary]
    _write(out / "distribution_summary.csv", "\n".join(lines) + "\n")
    print("\nmean per team (source / team / metric / n / mean):")
    for source, team, metric, n, mean, _ in summary:
        shown = f"{float(mean):.2f}" if mean else "-"
        print(f"  {source:<10} {team:<24} {metric:<16} {n:>5} {shown}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _add_corpus_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--team-csv", help="team_matches.csv")
    p.add_argument("--player-csv", help="player_matches.csv")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="knockout-dae", description=__doc__)
    parser.add_argument("--config", help="JSON file supplying any flag; explicit flags win")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand default from clobbering a top-level --config
    common.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="out")

    p_ingest = sub.add_parser("ingest", parents=[common], help="validate (or synthesize) a corpus")
    _add_corpus_flags(p_ingest)
    p_ingest.add_argument("--synthetic", action="store_true", help="generate a synthetic corpus from --seed")
    p_ingest.add_argument("--n-teams", type=int, default=8)
    p_ingest.add_argument("--n-matches", type=int, default=100)
    p_ingest.add_argument("--players-per-team", type=int, default=18)
    p_ingest.set_defaults(func=cmd_ingest)

    p_train = sub.add_parser("train", parents=[common], help="train the team and player models")
    _add_corpus_flags(p_train)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--batch", type=int)
    p_train.add_argument("--sigma", type=float)
    p_train.set_defaults(func=cmd_train)

    p_sim = sub.add_parser("simulate", parents=[common], help="simulate the remaining bracket")
    _add_corpus_flags(p_sim)
    p_sim.add_argument("--bracket", help="bracket.json")
    p_sim.add_argument("--models", help="directory holding the model artifacts (default: --out)")
    p_sim.add_argument("--runs", type=int, default=1)
    p_sim.add_argument("--sigma", type=float, help="simulation noise (default: the models' training sigma)")
    p_sim.set_defaults(func=cmd_simulate)

    p_report = sub.add_parser("report", parents=[common], help="correlation and distribution reports")
    _add_corpus_flags(p_report)
    p_report.add_argument("--sim", help="directory written by `simulate`")
    p_report.set_defaults(func=cmd_report)

    return parser, {"ingest": p_ingest, "train": p_train, "simulate": p_sim, "report": p_report}


def _load_config(path: str) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise InputError("config file must hold a JSON object")
    return {k.lstrip("-").replace("-", "_"): v for k, v in data.items()}


def parse_args(argv=None) -> argparse.Namespace:
    parser, subparsers = build_parser()
    first, _ = parser.parse_known_args(argv)
    if first.config:
        subparsers[first.command].set_defaults(**_load_config(first.config))
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, IngestError, FeatureError, ae.ArtifactError, ae.NetworkError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ae.TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATE


if __name__ == "__main__":
    sys.exit(main())
