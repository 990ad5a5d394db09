from __future__ import annotations

from pathlib import Path

import pytest

from stefanlab.cli import analyze_run
from stefanlab.config import load_config
from stefanlab.solver import run

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
BENCHMARKS = ("heat", "porous", "stefan_hat")

_acceptance_lines: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    _acceptance_lines[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_acceptance_lines):
        terminalreporter.write_line(_acceptance_lines[k])


class Benchmarks:
    """Benchmark runs shared across the session, computed on first use."""

    def __init__(self):
        self._runs = {}

    def config(self, name: str, nodes: int = 512, epsilon: float | None = None):
        cfg = load_config(CONFIGS / f"{name}.cfg")
        if nodes != 512:
            cfg = cfg.with_value("grid.nodes", [nodes])
        if epsilon is not None:
            cfg = cfg.with_value("problem.epsilon", epsilon)
        return cfg

    def run(self, name: str, nodes: int = 512, epsilon: float | None = None):
        key = (name, nodes, epsilon)
        if key not in self._runs:
            cfg = self.config(name, nodes, epsilon)
            record = run(cfg.problem(epsilon))
            self._runs[key] = (record, analyze_run(record, cfg, None))
        return self._runs[key]

    def ladder(self, nodes: int = 512):
        cfg = self.config("stefan_hat", nodes)
        return [self.run("stefan_hat", nodes, eps) for eps in cfg.epsilons]


@pytest.fixture(scope="session")
def benchmarks():
    return Benchmarks()
