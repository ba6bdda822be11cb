"""
Export utilities: grava o RunReport em CSV/texto e as séries temporais em CSV.
Uso:
    from src.export import emit_report, compare_reports
    paths = emit_report(report, 'data/reports', 'csv')
    diff = compare_reports('a/harmonic.csv', 'b/harmonic.csv')

- Cabeçalho '# config_hash=<sha256>' seguido das linhas check,value,tolerance,pass,reason.
- Floats em repr e terminador '\\n' fixo: mesma config + seed => arquivos idênticos byte a byte.
- O tempo de parede só vai para o log.
- Estados finais (quântico) e a base |+>, |-> (spin) vão em <name>_<chave>.pfld.
"""

import logging
import math
import os
from typing import List, Tuple

import pandas as pd

from src.fieldio import write_field

logger = logging.getLogger(__name__)

COLUMNS = ["check", "value", "tolerance", "pass", "reason"]
HASH_PREFIX = "# config_hash="


def _formatted(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    for col in out.columns:
        if pd.api.types.is_float_dtype(out[col]):
            out[col] = out[col].map(lambda v: repr(float(v)))
    return out


def _write(path: str, writer) -> str:
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer(fh)
    except OSError as e:
        raise OSError(f"falha ao gravar relatório em {path}: {e}") from e
    return path


def write_series(name: str, series: dict, out_dir: str) -> List[str]:
    """Grava cada série como <name>_<chave>.csv."""
    paths = []
    for key in sorted(series):
        path = os.path.join(out_dir, f"{name}_{key}.csv")
        frame = _formatted(series[key])
        paths.append(_write(path, lambda fh, f=frame: f.to_csv(fh, index=False, lineterminator="\n")))
        logger.debug("[emit] série %s com %d linhas em %s", key, len(frame), path)
    return paths


def _text_lines(report) -> List[str]:
    lines = [f"{HASH_PREFIX}{report.config_hash}", f"scenario {report.name}"]
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        line = f"{status} {c.name} {float(c.value)!r} <= {float(c.tolerance)!r}"
        if c.reason:
            line += f" ({c.reason})"
        lines.append(line)
    passed = sum(c.passed for c in report.checks)
    lines.append(f"{passed}/{len(report.checks)} checks passed")
    return lines


def emit_report(report, out_dir: str = 'data/reports', fmt: str = 'csv') -> List[str]:
    """
    Grava o relatório (e suas séries) em out_dir.

    - csv: <name>.csv com colunas fixas check,value,tolerance,pass,reason.
    - text: <name>.txt com uma linha por check.
    Retorna a lista de caminhos gravados; erros de I/O citam o caminho.
    """
    if fmt == 'csv':
        path = os.path.join(out_dir, f"{report.name}.csv")
        frame = report.to_frame()[COLUMNS].copy()
        frame["value"] = frame["value"].map(lambda v: repr(float(v)))
        frame["tolerance"] = frame["tolerance"].map(lambda v: repr(float(v)))

        def writer(fh):
            fh.write(f"{HASH_PREFIX}{report.config_hash}\n")
            frame.to_csv(fh, index=False, lineterminator="\n")
    elif fmt == 'text':
        path = os.path.join(out_dir, f"{report.name}.txt")

        def writer(fh):
            fh.write("\n".join(_text_lines(report)) + "\n")
    else:
        raise ValueError(f"formato desconhecido: {fmt}")
    paths = [_write(path, writer)]
    logger.info("[emit] relatório gravado em %s", path)
    paths += write_series(report.name, report.series, out_dir)
    for key in sorted(report.fields):
        paths.append(write_field(os.path.join(out_dir, f"{report.name}_{key}.pfld"), report.fields[key]))
    return paths


def read_report(path: str) -> Tuple[pd.DataFrame, str]:
    """Lê um relatório CSV; devolve (DataFrame, config_hash)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Arquivo não encontrado: {path}")
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        config_hash = first[len(HASH_PREFIX):] if first.startswith(HASH_PREFIX) else ""
        if not config_hash:
            fh.seek(0)
        df = pd.read_csv(fh, keep_default_na=False)
    missing = [c for c in COLUMNS[:4] if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: colunas ausentes {missing}")
    df["value"] = df["value"].astype(float)
    df["tolerance"] = df["tolerance"].astype(float)
    df["pass"] = df["pass"].astype(str).str.lower() == "true"
    return df, config_hash


def _values_differ(a: float, b: float, rtol: float) -> bool:
    if math.isnan(a) or math.isnan(b):
        return not (math.isnan(a) and math.isnan(b))
    if math.isinf(a) or math.isinf(b):
        return a != b
    return abs(a - b) > rtol * max(abs(a), abs(b))


def compare_reports(path_a: str, path_b: str, rtol: float = 1e-9) -> pd.DataFrame:
    """
    Linhas cujo pass mudou, cujo value mudou além de rtol, ou que só existem
    em um dos relatórios. DataFrame vazio = relatórios equivalentes.
    """
    a, hash_a = read_report(path_a)
    b, hash_b = read_report(path_b)
    if hash_a != hash_b:
        logger.warning("config_hash diferente: %s vs %s", hash_a[:12], hash_b[:12])
    merged = a[["check", "value", "pass"]].merge(b[["check", "value", "pass"]], on="check", how="outer",
                                                  suffixes=("_a", "_b"), indicator=True, sort=False)
    differs = []
    for _, row in merged.iterrows():
        if row["_merge"] != "both":
            differs.append(True)
            continue
        differs.append(bool(row["pass_a"] != row["pass_b"])
                       or _values_differ(float(row["value_a"]), float(row["value_b"]), rtol))
    out = merged[pd.Series(differs, index=merged.index, dtype=bool)]
    return out[["check", "value_a", "value_b", "pass_a", "pass_b"]].reset_index(drop=True)
