"""
Командная строка: fit, sweep, gen, nmi, bench-smo

    python -m app fit --input X.csv --likelihood bernoulli --k 4 --out runs/k4
"""
import argparse
import logging
import sys
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import ArchetypeError
from app.core.feasibility import validate_model
from app.core.schemas import (
    FitResult, LikelihoodKind, MatrixFormat, NmiNormalization, RunManifest,
    SolverConfig, SolverKind, SweepRow,
)
from app.services.background import background_job_service
from app.services.benchmark import bench_smo
from app.services.evaluation import evaluation_service, nmi
from app.services.matrix_io import (
    load_matrix, prepare_output_dir, read_array, save_matrix, save_model,
    write_restarts_table, write_sweep_table, write_trace,
)
from app.services.synthetic import (
    DEFAULT_K, DEFAULT_M, DEFAULT_N, DEFAULT_SHARPNESS, DEFAULT_VERTEX_MIXING, generate, write_problem
)
from app.utils.jsonio import file_digest, save_json

logger = logging.getLogger(__name__)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _int_list(text: str) -> List[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text}")
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text}")
    return values


def _add_solver_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, type=Path, help="файл матрицы данных")
    parser.add_argument("--format", type=MatrixFormat, default=MatrixFormat.DENSE,
                        choices=list(MatrixFormat), help="формат файла матрицы")
    parser.add_argument("--likelihood", type=LikelihoodKind, default=LikelihoodKind.GAUSSIAN,
                        choices=list(LikelihoodKind))
    parser.add_argument("--solver", type=SolverKind, default=SolverKind.SMO_AS,
                        choices=list(SolverKind))
    parser.add_argument("--seed", type=_non_negative_int, default=None)
    parser.add_argument("--restarts", type=_positive_int, default=None)
    parser.add_argument("--max-iter", type=_non_negative_int, default=None,
                        help="максимум внешних итераций")
    parser.add_argument("--tol", type=float, default=None, help="относительное изменение потерь")
    parser.add_argument("--epsilon", type=float, default=None, help="сглаживание бинарных данных")
    parser.add_argument("--no-damping", action="store_true", help="отключить демпфирование полушагов")
    parser.add_argument("--out", required=True, type=Path, help="выходная директория")
    parser.add_argument("--overwrite", action="store_true", help="писать в непустую директорию")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app", description=settings.app_name)
    parser.add_argument("--verbose", "-v", action="store_true", help="DEBUG-логирование")
    parser.add_argument("--threads", type=_non_negative_int, default=None,
                        help="число потоков (0 = по числу процессоров)")
    commands = parser.add_subparsers(dest="command", required=True)

    fit_parser = commands.add_parser("fit", help="обучить модель для одного K")
    _add_solver_options(fit_parser)
    fit_parser.add_argument("--k", required=True, type=_positive_int)

    sweep_parser = commands.add_parser("sweep", help="перебор K с рестартами")
    _add_solver_options(sweep_parser)
    sweep_parser.add_argument("--k-min", required=True, type=_positive_int)
    sweep_parser.add_argument("--k-max", required=True, type=_positive_int)

    gen_parser = commands.add_parser("gen", help="синтетическая задача")
    gen_parser.add_argument("--likelihood", type=LikelihoodKind, default=LikelihoodKind.BERNOULLI,
                            choices=list(LikelihoodKind))
    gen_parser.add_argument("--k", type=_positive_int, default=DEFAULT_K)
    gen_parser.add_argument("--m", type=_positive_int, default=DEFAULT_M)
    gen_parser.add_argument("--n", type=_positive_int, default=DEFAULT_N)
    gen_parser.add_argument("--seed", type=_non_negative_int, default=0)
    gen_parser.add_argument("--noise", type=float, default=0.0)
    gen_parser.add_argument("--sharpness", type=float, default=DEFAULT_SHARPNESS)
    gen_parser.add_argument("--vertex-mixing", type=float, default=DEFAULT_VERTEX_MIXING,
                            help="наибольшая доля массы столбца S вне доминирующей вершины")
    gen_parser.add_argument("--format", type=MatrixFormat, default=MatrixFormat.DENSE,
                            choices=list(MatrixFormat))
    gen_parser.add_argument("--out", required=True, type=Path)
    gen_parser.add_argument("--overwrite", action="store_true")

    nmi_parser = commands.add_parser("nmi", help="NMI двух матриц S")
    nmi_parser.add_argument("--s-a", required=True, type=Path)
    nmi_parser.add_argument("--s-b", required=True, type=Path)
    nmi_parser.add_argument("--normalization", type=NmiNormalization, default=None,
                            choices=list(NmiNormalization))

    bench_parser = commands.add_parser("bench-smo", help="SMO против эталонного решателя")
    bench_parser.add_argument("--k-list", type=_int_list, default=[2, 5, 10, 25])
    bench_parser.add_argument("--trials", type=_positive_int, default=100)
    bench_parser.add_argument("--seed", type=_non_negative_int, default=0)
    bench_parser.add_argument("--out", type=Path, default=None, help="CSV с таблицей")
    return parser


def solver_config(args: argparse.Namespace) -> SolverConfig:
    """SolverConfig из settings с переопределениями из флагов"""
    overrides: Dict[str, Any] = {
        "seed": args.seed,
        "restarts": args.restarts,
        "max_outer_iterations": args.max_iter,
        "rel_loss_tolerance": args.tol,
        "smoothing_epsilon": args.epsilon,
        "threads": args.threads,
    }
    if args.no_damping:
        overrides["step_damping"] = False
    return SolverConfig(**{k: v for k, v in overrides.items() if v is not None})


def _manifest(args: argparse.Namespace, argv: List[str], config: Optional[SolverConfig],
              seeds: List[int], started: float, started_at: datetime) -> RunManifest:
    input_path = getattr(args, "input", None)
    return RunManifest(
        command=args.command,
        argv=argv,
        config=config.model_dump(mode="json") if config else {},
        input_digest=file_digest(input_path) if input_path else None,
        seeds=seeds,
        started_at=started_at,
        finished_at=datetime.now(),
        wall_seconds=time.perf_counter() - started,
    )


def _write_fit_outputs(directory: Path, results: List[FitResult], args, config,
                       manifest: RunManifest) -> Dict[str, Any]:
    best = results[0]
    report = validate_model(best.model)
    if not report.is_empty:
        logger.warning("best model has %d feasibility violations", len(report.violations))

    save_model(directory, best.model, solver=best.solver, restart_id=best.restart_id,
               seed=best.seed, final_loss=best.final_loss,
               smoothing_epsilon=config.smoothing_epsilon, manifest=manifest)
    write_trace(directory / "trace.csv", best.trace)
    write_restarts_table(directory / "restarts.csv", results)
    summary = {
        "final_loss": best.final_loss,
        "iterations": best.trace.iterations,
        "converged": best.converged,
        "trace_monotone": best.trace.is_monotone(),
        "K": best.model.K,
        "likelihood": args.likelihood,
        "solver": best.solver,
        "restart_id": best.restart_id,
        "seed": best.seed,
        "damped_steps": best.trace.damped_steps,
        "manifest": manifest,
    }
    save_json(directory / "summary.json", summary)
    return summary


def cmd_fit(args: argparse.Namespace, argv: List[str]) -> int:
    started, started_at = time.perf_counter(), datetime.now()
    config = solver_config(args)
    X = load_matrix(args.input, args.format, binary=args.likelihood == LikelihoodKind.BERNOULLI)
    if args.k > X.shape[1]:
        raise ValueError(f"--k {args.k} exceeds the number of observations N={X.shape[1]}")
    out = prepare_output_dir(args.out, args.overwrite)

    results = background_job_service.fit_restarts(X, args.k, args.likelihood, config, args.solver)
    seeds = [config.seed + r for r in range(config.restarts)]
    manifest = _manifest(args, argv, config, seeds, started, started_at)
    summary = _write_fit_outputs(out, results, args, config, manifest)
    save_json(out / "manifest.json", manifest)

    logger.info("wrote %s", out)
    print(f"final_loss={summary['final_loss']:.17g} iterations={summary['iterations']} "
          f"converged={str(summary['converged']).lower()}")
    return 0


def cmd_sweep(args: argparse.Namespace, argv: List[str]) -> int:
    started, started_at = time.perf_counter(), datetime.now()
    if args.k_min > args.k_max:
        raise ValueError(f"--k-min {args.k_min} exceeds --k-max {args.k_max}")
    config = solver_config(args)
    X = load_matrix(args.input, args.format, binary=args.likelihood == LikelihoodKind.BERNOULLI)
    out = prepare_output_dir(args.out, args.overwrite)
    seeds = [config.seed + r for r in range(config.restarts)]
    rows: List[SweepRow] = []

    def _on_row(row: SweepRow, results: List[FitResult]) -> None:
        rows.append(row)
        if results:
            cell = out / f"K_{row.K}"
            manifest = _manifest(args, argv, config, seeds, started, started_at)
            _write_fit_outputs(cell, results, args, config, manifest)
            for result in results:
                save_matrix(cell / f"S_restart_{result.restart_id}.csv", result.model.S)
        # Таблица переписывается после каждого K, чтобы сохранить частичные результаты
        write_sweep_table(out / "sweep.csv", rows)

    evaluation_service.sweep_k(
        X, range(args.k_min, args.k_max + 1), args.likelihood, args.solver, config, on_row=_on_row
    )
    save_json(out / "manifest.json", _manifest(args, argv, config, seeds, started, started_at))

    failed = [row.K for row in rows if row.error]
    if failed:
        logger.warning("sweep finished with failures at K=%s", failed)
    for row in rows:
        print(f"K={row.K} best_loss={row.best_loss:.17g} mean_nmi={row.mean_nmi:.6f}")
    return 1 if failed else 0


def cmd_gen(args: argparse.Namespace, argv: List[str]) -> int:
    started, started_at = time.perf_counter(), datetime.now()
    out = prepare_output_dir(args.out, args.overwrite)
    problem = generate(args.likelihood, K=args.k, M=args.m, N=args.n, seed=args.seed,
                       noise=args.noise, archetype_sharpness=args.sharpness,
                       vertex_mixing=args.vertex_mixing)
    x_path = write_problem(problem, out, args.format)
    save_json(out / "manifest.json", _manifest(args, argv, None, [args.seed], started, started_at))
    logger.info("wrote %s", out)
    print(x_path)
    return 0


def cmd_nmi(args: argparse.Namespace, argv: List[str]) -> int:
    normalization = args.normalization or NmiNormalization(settings.nmi_normalization)
    print(nmi(read_array(args.s_a), read_array(args.s_b), normalization))
    return 0


def cmd_bench_smo(args: argparse.Namespace, argv: List[str]) -> int:
    table = bench_smo(args.k_list, args.trials, seed=args.seed)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out, index=False, float_format=settings.float_format)
        logger.info("wrote %s", args.out)
    print(table.to_string(index=False))
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "sweep": cmd_sweep,
    "gen": cmd_gen,
    "nmi": cmd_nmi,
    "bench-smo": cmd_bench_smo,
}


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, argv)
    except (ArchetypeError, ValidationError, OSError, ValueError) as exc:
        logger.debug("command %s failed", args.command, exc_info=True)
        message = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
