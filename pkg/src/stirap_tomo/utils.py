from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from stirap_tomo.state import BlockElements, MeasurementReport

console = Console(stderr=True)

def get_timestamp_str() -> str:
    """Get the current UTC time for output headers."""
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")

def get_project_root() -> Path:
    """Get the project root directory by looking for common project markers.

    Returns:
        Path object representing the project root directory
    """
    current = Path(__file__).resolve().parent
    markers = ['pyproject.toml', '.git']
    for parent in [current] + list(current.parents):
        if any((parent / marker).exists() for marker in markers):
            return parent
    return Path.cwd()

def default_config_path() -> Path:
    """Get the shipped reference configuration."""
    return get_project_root() / "configs" / "reference.cfg"

def format_complex(value: complex) -> str:
    return f"{value.real:+.6f}{value.imag:+.6f}i"

def _block_row(label: str, block: Optional[BlockElements]) -> list[str]:
    if block is None:
        return [label, "-", "-", "-"]
    return [label, f"{block.rho_mm:.6f}", f"{block.rho_nn:.6f}", format_complex(block.rho_mn)]

def show_report(report: MeasurementReport, title: str = "Reconstruction") -> None:
    """Display a measurement report with rich tables."""
    records = Table(title="Measurements", border_style="blue")
    for column in ("step", "alpha", "beta", "readout", "raw signal", "P_a"):
        records.add_column(column, justify="right")
    for r in report.records:
        records.add_row(
            str(r.step),
            f"{r.setting.alpha:.4f}",
            f"{r.setting.beta:.4f}",
            r.setting.signal_mode,
            f"{r.raw_signal:.6g}",
            f"{r.calibrated_pa:.6f}",
        )

    block = Table(title="Block", border_style="green")
    for column in ("", "rho_mm", "rho_nn", "rho_mn"):
        block.add_column(column, justify="right")
    block.add_row(*_block_row("estimate", report.estimate))
    if report.truth is not None:
        block.add_row(*_block_row("truth", report.truth))
        block.add_row(*_block_row("delta", report.delta))

    estimate = report.estimate
    status = "[green]physical[/green]" if estimate.physical else "[red]violates |rho_mn|^2 <= rho_mm*rho_nn[/red]"
    console.print(records)
    console.print(block)
    console.print(Panel(
        f"residual {estimate.residual:.3e} over {estimate.settings_used} settings, {status}",
        title=f"[bold green]{title}[/bold green]",
        border_style="green",
        padding=(1, 2)
    ))
