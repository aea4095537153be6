"""
Главный исполняемый файл приложения Calibeat-Engine.

Командная строка для оценки и генерации вероятностных прогнозов:
score - оценки Брайера, калибровки и refinement по транскрипту;
simulate - прогоны процедур калибитинга и таблица оценок по горизонтам;
regret - регрет полезности и калибровка индуцированного правила;
appendix - проверки строчных и столбцовых средних вогнутых функций;
examples - воспроизведение учебных примеров.

Коды завершения: 0 - успех, 2 - ошибка разбора или ввода-вывода,
3 - ошибка проверки данных, 4 - ошибка конфигурации.
"""
import argparse
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from config import DEFAULT_SEED, THREADS
from src.calibeat_engine.decision import regret, threshold_utility
from src.calibeat_engine.errors import CalibeatError, EmptySequence, UnknownConfigKey
from src.calibeat_engine.procedures import (
    SIMULATION_COLUMNS,
    AdversarySpec,
    ReferenceSpec,
    reference_sequence,
    replay_example_1,
    replay_step_failure,
    run_procedure,
    simulation_rows,
)
from src.calibeat_engine.rowcol import example1_snapshot, frequency_scenario, quadratic_transfer_check
from src.calibeat_engine.scores import (
    brier,
    refinement,
    score_report,
    steep_rule_gap_demo,
)
from src.calibeat_engine.scoring import make_quadratic, make_spherical, make_step_rule, rule_from_id
from src.calibeat_engine.simplex import ActionSet
from src.data_io.client import TranscriptClient, rows_to_csv
from src.data_io.run_config import RunConfig
from src.utils.logger import console, error_console


def _split(value: str | None) -> list[str] | None:
    if value is None:
        return None
    return [item.strip() for item in value.split(",") if item.strip()]


def _ints(value: str | None) -> list[int] | None:
    items = _split(value)
    return None if items is None else [int(float(v)) for v in items]


def _show(value) -> str:
    try:
        return f"{float(value):.6f}"
    except (TypeError, ValueError):
        return str(value)


def _emit(client: TranscriptClient, out: str | None, payload, fmt: str = "json", rows=None, columns=None) -> None:
    """Пишет отчет в файл (JSON или CSV) или, без --out, только печатает сводку."""
    if not out:
        return
    if fmt == "csv":
        path = client.write_text(out, rows_to_csv(rows or [], columns))
    else:
        path = client.write_json(out, payload)
    console.log(f"[grey50]Отчет записан: {path}[/grey50]")


def _utilities(client: TranscriptClient, action_set: ActionSet, ref: str | None) -> dict:
    utilities = {}
    if action_set.size == 2:
        utilities["threshold"] = threshold_utility(action_set)
    if ref:
        u = client.load_utility(ref, action_set)
        utilities[u.name] = u
    return utilities


# --- score ---

def cmd_score(args, client: TranscriptClient) -> int:
    """Оценки транскрипта для каждого правила и разбиения."""
    transcript = client.load_transcript(args.transcript, exact=args.exact)
    cfg = RunConfig().override(
        rules=_split(args.rules), binnings=_split(args.binning), exact=args.exact or None, format=args.format,
    )
    utilities = _utilities(client, transcript.action_set, args.utility)
    rules = [rule_from_id(transcript.action_set, rid, utilities) for rid in cfg.rules]
    forecasts = transcript.forecasts
    if not forecasts:
        raise EmptySequence("В транскрипте нет прогнозов c")
    binnings = {name: transcript.binning(name) for name in cfg.binnings}
    reports = [
        score_report(rule, transcript.actions, forecasts, binnings, seed=args.seed, config_hash=cfg.config_hash())
        for rule in rules
    ]

    extra = {}
    if transcript.reference is not None:
        b_bins = transcript.reference_binning()
        extra = {rule.name: refinement(rule, transcript.actions, b_bins, exact=transcript.exact) for rule in rules}

    table = Table(title=f"Оценки: {args.transcript} (t = {len(transcript)})")
    for column in ("Правило", "Разбиение", "B", "K", "R", "Остаток"):
        table.add_column(column, justify="right" if column not in ("Правило", "Разбиение") else "left")
    for report in reports:
        for name in binnings:
            table.add_row(
                report.rule, name, _show(report.brier), _show(report.calibration[name]),
                _show(report.refinement[name]), _show(report.decomposition_residual.get(name, "-")),
            )
    console.print(table)

    payload = {
        "transcript": str(args.transcript),
        "seed": args.seed,
        "config_hash": cfg.config_hash(),
        "reports": [r.to_dict() for r in reports],
        "reference_refinement": {k: str(v) if not isinstance(v, float) else v for k, v in extra.items()},
    }
    rows = [dict(row, seed=args.seed, config_hash=cfg.config_hash()) for r in reports for row in r.csv_rows()]
    _emit(client, args.out, payload, cfg.format, rows)
    return 0


# --- simulate ---

def _references(cfg: RunConfig, action_set: ActionSet, horizon: int, seed: int) -> list[list]:
    """N эталонов; n-й циклический эталон имеет reference_bins + n корзин."""
    sequences = []
    for n in range(cfg.references):
        bins = cfg.reference_bins + (n if cfg.reference == "cyclic" else 0)
        rng = np.random.default_rng([seed, n])
        sequences.append(reference_sequence(ReferenceSpec(cfg.reference, bins), action_set, horizon, rng, cfg.exact))
    return sequences


def _simulate_seed(cfg: RunConfig, seed: int) -> tuple[int, list[dict], object]:
    action_set = ActionSet.binary()
    horizon = max(cfg.horizons)
    references = _references(cfg, action_set, horizon, seed)
    adversary = AdversarySpec(cfg.adversary, pattern=tuple(cfg.pattern))
    transcript = run_procedure(cfg.procedure, action_set, horizon, references, adversary, seed, cfg.delta, cfg.exact)
    utilities = {"threshold": threshold_utility(action_set)}
    rules = [rule_from_id(action_set, rid, utilities) for rid in cfg.rules]
    return seed, simulation_rows(transcript, rules, cfg.horizons, cfg.procedure, seed, cfg.config_hash()), transcript


def cmd_simulate(args, client: TranscriptClient) -> int:
    """Прогоны процедуры по зернам; таблица (t, rule, B, K, R, bound, gap)."""
    cfg = RunConfig()
    if args.scenario:
        scenarios = client.load_scenarios()
        if args.scenario not in scenarios:
            raise UnknownConfigKey(f"Нет сценария '{args.scenario}' (есть: {', '.join(scenarios)})")
        cfg = scenarios[args.scenario]
    if args.config:
        cfg = client.load_run_config(args.config)
    cfg = cfg.override(
        procedure=args.procedure,
        adversary=args.adversary,
        rules=_split(args.rules),
        horizons=_ints(args.horizons),
        seeds=[args.seed] if args.seed is not None else None,
        delta=args.delta,
        exact=args.exact or None,
        out=args.out,
        format=args.format,
    )

    results = {}
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        transient=True,
        console=console,
    ) as progress:
        task = progress.add_task(f"[cyan]Процедура '{cfg.procedure}'", total=len(cfg.seeds))
        with ThreadPoolExecutor(max_workers=THREADS) as pool:
            for seed, rows, transcript in pool.map(lambda s: _simulate_seed(cfg, s), cfg.seeds):
                results[seed] = (rows, transcript)
                progress.advance(task)

    rows = [row for seed in cfg.seeds for row in results[seed][0]]
    table = Table(title=f"Симуляция: {cfg.procedure}, противник {cfg.adversary}")
    for column in SIMULATION_COLUMNS[:7]:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(*(_show(row[c]) if c not in ("t", "rule") else str(row[c]) for c in SIMULATION_COLUMNS[:7]))
    console.print(table)

    if args.transcript_out:
        client.write_transcript(args.transcript_out, results[cfg.seeds[0]][1])
    payload = {"config": cfg.to_dict(), "config_hash": cfg.config_hash(), "rows": rows}
    _emit(client, cfg.out, payload, cfg.format, rows, SIMULATION_COLUMNS)
    return 0


# --- regret ---

def cmd_regret(args, client: TranscriptClient) -> int:
    """Регрет полезности против калибровки индуцированного правила."""
    transcript = client.load_transcript(args.transcript, exact=args.exact)
    if args.utility == "threshold":
        u = threshold_utility(transcript.action_set)
    else:
        u = client.load_utility(args.utility, transcript.action_set)
    cfg = RunConfig().override(binnings=[args.binning], utility=args.utility, brute_force=not args.no_brute_force)
    if not transcript.forecasts:
        raise EmptySequence("В транскрипте нет прогнозов c")
    report = regret(u, transcript.actions, transcript.forecasts, transcript.binning(args.binning), cfg.brute_force)

    console.print(Panel(
        f"Средняя полезность U(c): [bold]{_show(report.avg_utility)}[/]\n"
        f"Лучшее отображение корзин: [bold]{_show(report.best_remap_utility)}[/]\n"
        f"Полный перебор: {_show(report.brute_force_utility) if report.brute_force_utility is not None else '-'}\n"
        f"Регрет: [bold yellow]{_show(report.regret)}[/]   K^(L^u): [bold yellow]{_show(report.matched_calibration)}[/]\n"
        f"Остаток (регрет − калибровка): {report.residual:.3e}",
        title=f"[green]Регрет '{u.name}' на разбиении '{args.binning}'[/green]",
    ))
    payload = {"utility": u.name, "binning": args.binning, "seed": args.seed, "config_hash": cfg.config_hash(), **report.to_dict()}
    _emit(client, args.out, payload)
    return 0


# --- appendix ---

def cmd_appendix(args, client: TranscriptClient) -> int:
    """Проверки строчных и столбцовых средних по файлу сценария."""
    scenario = client.load_appendix_scenario(args.scenario)
    allow = args.allow_degenerate or scenario.allow_degenerate
    seed = args.seed if args.seed is not None else scenario.seed

    if scenario.kind == "transfer":
        trials = args.trials if args.trials is not None else scenario.trials
        verdict = quadratic_transfer_check(scenario.X, trials=trials, seed=seed, allow_degenerate=allow)
        body = verdict.to_dict()
        console.print(Panel(
            "\n".join(f"{k}: {v}" for k, v in body.items()),
            title=f"[green]Перенос с квадратичного правила: {args.scenario}[/green]",
        ))
        _emit(client, args.out, {"scenario": str(args.scenario), "seed": seed, **body})
        return 0

    action_set = scenario.action_set
    rules = [rule_from_id(action_set, rid) for rid in scenario.rules]
    sweep = scenario.sweep_trials
    if args.search:
        sweep = args.trials if args.trials is not None else max(sweep, 1000)
    report = frequency_scenario(
        scenario.action_averages, scenario.frequencies, rules,
        sweep_trials=sweep, seed=seed, allow_degenerate=allow,
    )
    table = Table(title=f"Идеально откалиброванный прогноз: {args.scenario}")
    for column in ("Правило", "C(H)", "R(H)", "превосходит b", "совместное", "все собственные"):
        table.add_column(column)
    for name, flags in report.flags.items():
        table.add_row(
            name, _show(flags["B_c"]), _show(flags["R_b"]),
            str(flags["calibeats"]), str(flags["calibeats_joint"]), str(flags["proper_calibeats"]),
        )
    console.print(table)
    if report.sweep_summary:
        console.print(Panel("\n".join(f"{k}: {v}" for k, v in report.sweep_summary.items()), title="[cyan]Перебор λ[/cyan]"))
    _emit(client, args.out, {"scenario": str(args.scenario), "seed": seed, **report.to_dict()})
    if report.sweep and args.plot_data:
        client.write_csv(args.plot_data, report.sweep)
    return 0


# --- examples ---

def cmd_examples(args, client: TranscriptClient) -> int:
    """Таблица из 10 периодов, провал ступенчатого правила и разрыв для крутого правила."""
    example = replay_example_1()
    action_set = example.action_set
    b_bins = example.reference_binning()
    rows = {}
    rules = [make_quadratic(action_set), make_spherical(action_set, 2)]
    for rule in rules:
        rows[rule.name] = {
            "B_c": brier(rule, example.actions, example.forecasts),
            "R_b": refinement(rule, example.actions, b_bins, exact=example.exact),
        }
    step_run = replay_step_failure(args.horizon)
    step = make_step_rule(action_set)
    step_scores = {
        "B_c": brier(step, step_run.actions, step_run.forecasts),
        "R_b": refinement(step, step_run.actions, step_run.reference_binning(), exact=True),
    }
    steep = steep_rule_gap_demo(args.steep_n)
    averages, lam = example1_snapshot(action_set, exact=example.exact)
    snapshot = frequency_scenario(averages, lam, rules)

    table = Table(title="Таблица из 10 периодов")
    for column in ("Правило", "B(c)", "R(b)", "c превосходит b"):
        table.add_column(column)
    for name, values in rows.items():
        table.add_row(name, _show(values["B_c"]), _show(values["R_b"]), str(values["B_c"] <= values["R_b"]))
    console.print(table)
    console.print(Panel(
        f"Ступенчатое правило, t = {args.horizon}: B(c) = {_show(step_scores['B_c'])}, R(b) = {_show(step_scores['R_b'])}\n"
        f"Правило α = −1, n = {args.steep_n}: среднее η = {_show(steep.average)} ≥ {_show(steep.lower_bound)}\n"
        f"Матрица λ(b, d): c превосходит b для всех собственных правил = {snapshot.flags[rules[0].name]['proper_calibeats']}",
        title="[yellow]Ограниченное нелипшицево и неограниченное правила[/yellow]",
    ))
    payload = {
        "example1": {name: {k: str(v) for k, v in values.items()} for name, values in rows.items()},
        "step_failure": {"t": args.horizon, **{k: str(v) for k, v in step_scores.items()}},
        "steep_gap": {"n": args.steep_n, "average": str(steep.average), "lower_bound": str(steep.lower_bound)},
        "snapshot": snapshot.to_dict()["flags"],
    }
    _emit(client, args.out, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calibeat", description="Калибитинг и собственные правила оценки")
    sub = parser.add_subparsers(dest="command", required=True)

    score = sub.add_parser("score", help="оценки транскрипта")
    score.add_argument("transcript")
    score.add_argument("--rules", default=None, help="через запятую: quadratic,spherical:2,...")
    score.add_argument("--binning", default=None, help="через запятую: forecast,reference,joint,<имя>")
    score.add_argument("--utility", default=None, help="JSON полезности для правил induced:<имя>")
    score.add_argument("--seed", type=int, default=DEFAULT_SEED)
    score.add_argument("--exact", action="store_true")
    score.add_argument("--out", default=None)
    score.add_argument("--format", choices=("json", "csv"), default="json")
    score.set_defaults(handler=cmd_score)

    simulate = sub.add_parser("simulate", help="прогон процедуры")
    simulate.add_argument("--scenario", default=None, help="имя из data/scenarios.json")
    simulate.add_argument("--config", default=None, help="JSON конфигурации")
    simulate.add_argument("--procedure", default=None)
    simulate.add_argument("--adversary", default=None)
    simulate.add_argument("--rules", default=None)
    simulate.add_argument("--horizons", default=None)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--delta", type=float, default=None)
    simulate.add_argument("--exact", action="store_true")
    simulate.add_argument("--out", default=None)
    simulate.add_argument("--format", choices=("json", "csv"), default="csv")
    simulate.add_argument("--transcript-out", default=None)
    simulate.set_defaults(handler=cmd_simulate)

    reg = sub.add_parser("regret", help="регрет полезности")
    reg.add_argument("transcript")
    reg.add_argument("--utility", default="threshold")
    reg.add_argument("--binning", default="forecast")
    reg.add_argument("--no-brute-force", action="store_true")
    reg.add_argument("--seed", type=int, default=DEFAULT_SEED)
    reg.add_argument("--exact", action="store_true")
    reg.add_argument("--out", default=None)
    reg.set_defaults(handler=cmd_regret)

    appendix = sub.add_parser("appendix", help="строчные и столбцовые средние")
    appendix.add_argument("scenario")
    appendix.add_argument("--search", action="store_true", help="перебор λ для сценария частот")
    appendix.add_argument("--trials", type=int, default=None)
    appendix.add_argument("--seed", type=int, default=None)
    appendix.add_argument("--allow-degenerate", action="store_true")
    appendix.add_argument("--out", default=None)
    appendix.add_argument("--plot-data", default=None)
    appendix.set_defaults(handler=cmd_appendix)

    examples = sub.add_parser("examples", help="учебные примеры")
    examples.add_argument("--horizon", type=int, default=200)
    examples.add_argument("--steep-n", type=int, default=50)
    examples.add_argument("--out", default=None)
    examples.set_defaults(handler=cmd_examples)
    return parser


def main(argv: list[str] | None = None) -> int:
    """
    Разбирает аргументы, выполняет команду и возвращает код завершения.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    client = TranscriptClient()
    try:
        return args.handler(args, client)
    except CalibeatError as e:
        error_console.print(f"[bold red]{type(e).__name__}:[/] {e}")
        return e.exit_code
    except OSError as e:
        error_console.print(f"[bold red]Ошибка ввода-вывода:[/] {e}")
        return 2
    except Exception:
        error_console.print_exception()
        return 1


if __name__ == "__main__":
    sys.exit(main())
