"""
Чтение и запись матриц, моделей и таблиц результатов

Форматы матриц:
  dense-delimited  : строка на признак, значения через разделитель,
                      необязательная строка заголовка;
  sparse-coordinate: заголовок "M N NNZ", затем строки "i j v"
                      (индексы с 1, отсутствующие элементы равны 0,
                      строки с "%" пропускаются).
"""
import io
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse

from app.core.config import settings
from app.core.errors import MatrixParseError, OutputExistsError
from app.core.schemas import (
    ArchetypalModel, DataMatrix, DataMode, FitResult, FitTrace, LikelihoodKind,
    MatrixFormat, SweepRow,
)
from app.utils.jsonio import load_json, save_json

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TRACE_COLUMNS = ["iteration", "half_step", "loss", "seconds"]
SWEEP_COLUMNS = ["K", "best_loss", "mean_nmi", "seconds", "error"]
RESTART_COLUMNS = ["restart_id", "seed", "final_loss", "iterations", "converged"]

MODEL_C_FILE = "C.csv"
MODEL_S_FILE = "S.csv"
MODEL_META_FILE = "model.json"


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def _read_dense(path: Path, delimiter: str) -> np.ndarray:
    kept: List[Tuple[int, str]] = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                kept.append((lineno, line.rstrip("\r\n")))
    if not kept:
        raise MatrixParseError(f"{path} contains no data")

    first_tokens = [t.strip() for t in kept[0][1].split(delimiter)]
    if not all(_is_number(t) for t in first_tokens):
        logger.debug("%s: treating line %d as a header", path, kept[0][0])
        kept = kept[1:]
        if not kept:
            raise MatrixParseError(f"{path} contains a header but no data")

    width = len(kept[0][1].split(delimiter))
    for lineno, line in kept:
        count = len(line.split(delimiter))
        if count != width:
            raise MatrixParseError(f"expected {width} values, found {count}", line=lineno)

    try:
        frame = pd.read_csv(
            io.StringIO("\n".join(line for _, line in kept)),
            sep=delimiter, header=None, dtype=str, keep_default_na=False,
            skipinitialspace=True, engine="python",
        )
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = kept[int(match.group(1)) - 1][0] if match else None
        raise MatrixParseError(str(exc), line=line) from exc

    frame = frame.apply(lambda col: col.str.strip())
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = (int(i) for i in np.argwhere(bad)[0])
        raise MatrixParseError(
            f"cannot parse {frame.iat[row, col]!r} in column {col + 1}", line=kept[row][0]
        )
    return frame.to_numpy().astype(np.float64)


def _read_sparse(path: Path) -> np.ndarray:
    shape: Optional[Tuple[int, int, int]] = None
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    seen: Dict[Tuple[int, int], int] = {}

    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("%"):
                continue
            tokens = stripped.split()
            if shape is None:
                if len(tokens) != 3:
                    raise MatrixParseError("header must be 'M N NNZ'", line=lineno)
                try:
                    shape = tuple(int(t) for t in tokens)
                except ValueError:
                    raise MatrixParseError(f"non-integer header {stripped!r}", line=lineno) from None
                if min(shape[:2]) < 1 or shape[2] < 0:
                    raise MatrixParseError(f"invalid dimensions {stripped!r}", line=lineno)
                continue

            if len(tokens) not in (2, 3):
                raise MatrixParseError("entry must be 'i j v'", line=lineno)
            try:
                i, j = int(tokens[0]), int(tokens[1])
                v = float(tokens[2]) if len(tokens) == 3 else 1.0
            except ValueError:
                raise MatrixParseError(f"cannot parse entry {stripped!r}", line=lineno) from None
            if not (1 <= i <= shape[0] and 1 <= j <= shape[1]):
                raise MatrixParseError(
                    f"index ({i}, {j}) outside a {shape[0]}x{shape[1]} matrix", line=lineno
                )
            if (i, j) in seen:
                raise MatrixParseError(
                    f"duplicate entry ({i}, {j}), first given on line {seen[(i, j)]}", line=lineno
                )
            seen[(i, j)] = lineno
            rows.append(i - 1)
            cols.append(j - 1)
            vals.append(v)

    if shape is None:
        raise MatrixParseError(f"{path} has no 'M N NNZ' header")
    if len(vals) != shape[2]:
        raise MatrixParseError(f"header declares {shape[2]} entries, found {len(vals)}")
    coo = sparse.coo_matrix((vals, (rows, cols)), shape=shape[:2], dtype=np.float64)
    return coo.toarray()


def load_matrix(
    path: PathLike,
    fmt: MatrixFormat = MatrixFormat.DENSE,
    binary: bool = False,
    delimiter: Optional[str] = None,
) -> DataMatrix:
    """
    Загружает матрицу данных.

    Raises:
        MatrixParseError: ошибка разбора (с номером строки)
        ModeError: binary=True и встречено значение вне {0, 1}
    """
    path = Path(path)
    if MatrixFormat(fmt) == MatrixFormat.SPARSE:
        values = _read_sparse(path)
    else:
        values = _read_dense(path, delimiter or settings.delimiter)
    mode = DataMode.BINARY if binary else DataMode.CONTINUOUS
    logger.info("loaded %s: %dx%d (%s)", path, values.shape[0], values.shape[1], mode.value)
    return DataMatrix(values=values, mode=mode)


def save_matrix(
    path: PathLike,
    values: np.ndarray,
    fmt: MatrixFormat = MatrixFormat.DENSE,
    delimiter: Optional[str] = None,
) -> None:
    """Записывает матрицу с 17 значащими цифрами"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=np.float64)
    if MatrixFormat(fmt) == MatrixFormat.SPARSE:
        coo = sparse.coo_matrix(values)
        order = np.lexsort((coo.col, coo.row))
        with path.open("w", encoding="utf-8") as f:
            f.write(f"{values.shape[0]} {values.shape[1]} {coo.nnz}\n")
            for idx in order:
                f.write(f"{coo.row[idx] + 1} {coo.col[idx] + 1} "
                        f"{settings.float_format % coo.data[idx]}\n")
        return
    pd.DataFrame(values).to_csv(
        path, sep=delimiter or settings.delimiter, header=False, index=False,
        float_format=settings.float_format,
    )


def read_array(path: PathLike, delimiter: Optional[str] = None) -> np.ndarray:
    """Плотная матрица без проверки режима (C, S, факторы)"""
    return _read_dense(Path(path), delimiter or settings.delimiter)


def save_model(directory: PathLike, model: ArchetypalModel, **meta: Any) -> None:
    """C.csv, S.csv и model.json с метаданными"""
    directory = Path(directory)
    save_matrix(directory / MODEL_C_FILE, model.C)
    save_matrix(directory / MODEL_S_FILE, model.S)
    save_json(directory / MODEL_META_FILE, {
        "K": model.K,
        "N": model.N,
        "likelihood": model.likelihood,
        **meta,
    })


def load_model(directory: PathLike) -> Tuple[ArchetypalModel, Dict[str, Any]]:
    directory = Path(directory)
    meta = load_json(directory / MODEL_META_FILE)
    model = ArchetypalModel(
        C=read_array(directory / MODEL_C_FILE),
        S=read_array(directory / MODEL_S_FILE),
        likelihood=LikelihoodKind(meta["likelihood"]),
    )
    return model, meta


def trace_frame(trace: FitTrace) -> pd.DataFrame:
    """Строка 0: начальные потери, далее по две строки (S, C) на итерацию"""
    iterations = [(n + 1) // 2 for n in range(len(trace.losses))]
    return pd.DataFrame({
        "iteration": iterations,
        "half_step": [h.value for h in trace.half_steps],
        "loss": trace.losses,
        "seconds": trace.wall_times,
    }, columns=TRACE_COLUMNS)


def write_trace(path: PathLike, trace: FitTrace) -> None:
    trace_frame(trace).to_csv(path, index=False, float_format=settings.float_format)


def write_sweep_table(path: PathLike, rows: Iterable[SweepRow]) -> None:
    frame = pd.DataFrame([row.model_dump() for row in rows], columns=SWEEP_COLUMNS)
    frame.to_csv(path, index=False, float_format=settings.float_format)


def write_restarts_table(path: PathLike, results: Iterable[FitResult]) -> None:
    frame = pd.DataFrame([
        {
            "restart_id": r.restart_id,
            "seed": r.seed,
            "final_loss": r.final_loss,
            "iterations": r.trace.iterations,
            "converged": r.converged,
        }
        for r in results
    ], columns=RESTART_COLUMNS)
    frame.to_csv(path, index=False, float_format=settings.float_format)


def prepare_output_dir(directory: PathLike, overwrite: bool = False) -> Path:
    """Создает директорию; непустая директория требует overwrite"""
    directory = Path(directory)
    if directory.exists():
        if not directory.is_dir():
            raise OutputExistsError(f"{directory} exists and is not a directory")
        if any(directory.iterdir()) and not overwrite:
            raise OutputExistsError(f"{directory} is not empty; pass --overwrite to reuse it")
    directory.mkdir(parents=True, exist_ok=True)
    return directory
