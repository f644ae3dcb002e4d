"""Command-line interface for qfm-casr.

Exit codes: 0 success, 3 config schema error, 4 I/O or malformed file,
5 oracle acceptance failure, 6 numerical precondition.
"""

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click

from ..core import storage
from ..core.engine import (
    ExperimentConfig,
    QFMCASREngine,
    apply_overrides,
    list_presets,
    load_config,
    parse_config,
)
from ..core.errors import AcceptanceError, ConfigError, NumericalError, QFMCASRError
from ..core.spectroscopy import candidate_targets, disambiguate_target
from ..core.storage import TRAJECTORY_COLUMNS, provenance, rows_table, write_table

logger = logging.getLogger(__name__)


def handle_errors(func: Callable[..., Any]) -> Callable[..., Any]:
    """Report package errors on stderr and exit with their code."""

    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return func(*args, **kwargs)
        except QFMCASRError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.exit_code)
        except ValueError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(NumericalError.exit_code)

    return wrapper


def config_options(func: Callable[..., Any]) -> Callable[..., Any]:
    """Flags shared by every config-driven command."""
    options = [
        click.option("--config", "config_source", required=True,
                     help="Config file path or preset name"),
        click.option("--seed", type=int, default=None, help="Override the config seed"),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Output file"),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None,
                     help="Output format"),
        click.option("--clip-dc/--keep-dc", default=None,
                     help="Remove the trace mean before the FFT"),
        click.option("--window", type=click.Choice(["none", "hann"]), default=None,
                     help="FFT window"),
        click.option("--literal-eq4-prefactor", "--literal-prefactor", "literal_prefactor",
                     is_flag=True, default=None,
                     help="Use Φ_max = 4πNΩ_e/ω_e instead of 2NΩ_e/ω_e"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _apply(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    # an absent flag must not switch off a prefactor chosen in the file
    if not overrides.get("literal_prefactor"):
        overrides = {**overrides, "literal_prefactor": None}
    return apply_overrides(config, **overrides)


def _engine(config_source: str, **overrides: Any) -> QFMCASREngine:
    return QFMCASREngine(_apply(load_config(config_source), overrides))


def _provenance(ctx: click.Context, config: ExperimentConfig) -> Dict[str, Any]:
    return provenance(ctx.command_path, config.model_dump(mode="json"), config.seed)


def _output_path(config: ExperimentConfig, default_stem: str) -> Tuple[Path, str]:
    fmt = config.output.format
    if config.output.path:
        return Path(config.output.path), fmt
    return Path(f"{default_stem}.{fmt}"), fmt


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(f"{path.stem}_{suffix}{path.suffix}")


def _echo_json(payload: Any) -> None:
    click.echo(json.dumps(payload, indent=2))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Debug logging")
@click.option("-q", "--quiet", is_flag=True, help="Warnings and errors only")
@click.pass_context
def cli(ctx: click.Context, verbose: bool, quiet: bool) -> None:
    """qfm-casr - quantum frequency mixing and synchronized readout toolkit"""
    ctx.ensure_object(dict)
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )


@cli.command()
@config_options
@click.pass_context
@handle_errors
def simulate(ctx: click.Context, config_source: str, **overrides: Any) -> None:
    """Synthesize a CASR trace."""
    engine = _engine(config_source, **overrides)
    trace = engine.simulate()
    path, fmt = _output_path(engine.config, "trace")
    write_table(storage.trace_table(trace, _provenance(ctx, engine.config)), path, fmt)
    _echo_json({"output": str(path), **engine.summary(trace)})


@cli.command()
@click.argument("trace_path", type=click.Path(dir_okay=False))
@click.option("--config", "config_source", default=None,
              help="Config file or preset; JSON traces fall back to their provenance")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Spectrum file")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default=None)
@click.option("--clip-dc/--keep-dc", default=None)
@click.option("--window", type=click.Choice(["none", "hann"]), default=None)
@click.option("--literal-eq4-prefactor", "--literal-prefactor", "literal_prefactor",
              is_flag=True, default=None)
@click.pass_context
@handle_errors
def spectrum(
    ctx: click.Context,
    trace_path: str,
    config_source: Optional[str],
    **overrides: Any,
) -> None:
    """Spectrum, peak table and noise floor of a trace file."""
    out = overrides.pop("out", None)
    config = _spectrum_config(trace_path, config_source)
    engine = QFMCASREngine(_apply(config, overrides))
    trace = storage.read_trace(Path(trace_path), engine.casr_config)
    analysis = engine.analyze(trace)

    fmt = engine.config.output.format
    source = Path(trace_path)
    path = Path(out) if out else source.with_name(f"{source.stem}_spectrum.{fmt}")
    prov = _provenance(ctx, engine.config)
    write_table(storage.spectrum_table(analysis.spectrum, prov), path, fmt)
    peaks = [p.to_dict() for p in analysis.peaks]
    write_table(
        rows_table("peaks", peaks, columns=_PEAK_COLUMNS,
                   metadata={"noise_floor": analysis.to_dict()["noise_floor"]}, prov=prov),
        _sibling(path, "peaks"),
        fmt,
    )
    _echo_json({"output": str(path), **analysis.to_dict()})


_PEAK_COLUMNS = [
    "alias_hz", "bin", "magnitude", "re", "im", "snr", "effective_field_t", "target_field_t",
    "effective_phase_deg", "target_phase_deg", "target_frequency_hz",
]


def _spectrum_config(trace_path: str, config_source: Optional[str]) -> ExperimentConfig:
    if config_source is not None:
        return load_config(config_source)
    path = Path(trace_path)
    if path.suffix.lower() == ".json" and path.exists():
        table = storage.backend_for(path).load()
        prov = table.provenance or {}
        if prov.get("config"):
            return parse_config(json.dumps(prov["config"]), f"{path} provenance")
    raise ConfigError("spectrum needs --config unless the trace carries provenance")


@cli.command("sensitivity-sweep")
@config_options
@click.pass_context
@handle_errors
def sensitivity_sweep(ctx: click.Context, config_source: str, **overrides: Any) -> None:
    """Target sensitivity over the configured frequency grid."""
    engine = _engine(config_source, **overrides)
    table = engine.sensitivity_sweep()
    path, fmt = _output_path(engine.config, "sensitivity")
    write_table(
        rows_table("sensitivity", table.to_rows(), columns=table.COLUMNS,
                   metadata=table.metadata(), prov=_provenance(ctx, engine.config)),
        path,
        fmt,
    )
    summary: Dict[str, Any] = {"output": str(path), "points": len(table)}
    for branch in table.branches:
        _, eta, valid = table.columns(branch)
        summary[branch.value] = {
            "valid_points": int(valid.sum()),
            "eta_target_at_lowest_t_per_sqrt_hz": float(eta[valid][0]) if valid.any() else None,
        }
    _echo_json(summary)


@cli.command("phase-sweep")
@config_options
@click.pass_context
@handle_errors
def phase_sweep(ctx: click.Context, config_source: str, **overrides: Any) -> None:
    """Step the target phase and recover it from each spectrum."""
    engine = _engine(config_source, **overrides)
    result = engine.phase_sweep()
    path, fmt = _output_path(engine.config, "phase_sweep")
    prov = _provenance(ctx, engine.config)
    write_table(rows_table("phase_sweep", result.to_rows(), metadata=result.summary(), prov=prov),
                path, fmt)
    write_table(rows_table("phase_histogram", result.histogram_rows(), prov=prov),
                _sibling(path, "histogram"), fmt)
    _echo_json({"output": str(path), **result.summary()})


@cli.command("oracle-validate")
@config_options
@click.option("--trajectory", "trajectory_path", type=click.Path(dir_okay=False), default=None,
              help="Also dump the trajectory as CSV")
@click.pass_context
@handle_errors
def oracle_validate(
    ctx: click.Context,
    config_source: str,
    trajectory_path: Optional[str],
    **overrides: Any,
) -> None:
    """Integrate the spin dynamics and compare with the effective model."""
    engine = _engine(config_source, **overrides)
    report = engine.oracle_validate(keep_trajectory=trajectory_path is not None)

    if report.trajectory is not None and trajectory_path is not None:
        write_table(
            rows_table("trajectory", report.trajectory.to_rows(), columns=TRAJECTORY_COLUMNS),
            Path(trajectory_path),
            "csv",
        )
    if engine.config.output.path:
        summary = {k: v for k, v in report.to_dict().items() if k != "rows"}
        write_table(
            rows_table("oracle", [r.to_dict() for r in report.comparison.rows],
                       metadata=summary, prov=_provenance(ctx, engine.config)),
            Path(engine.config.output.path),
            engine.config.output.format,
        )

    click.echo(f"{'quantity':<12} {'predicted':>16} {'fitted':>16} {'error':>12}  ok")
    for row in report.comparison.rows:
        click.echo(
            f"{row.name:<12} {row.predicted:>16.9g} {row.fitted:>16.9g} {row.error:>12.4g}  "
            f"{'yes' if row.within else 'NO'}"
        )
    click.echo(f"residual rms {report.comparison.fit.residual_rms:.3g} rad, "
               f"flagged={report.comparison.fit.flagged}, norm error {report.norm_error:.2g}")
    if not report.passed:
        raise AcceptanceError("oracle fit is outside the acceptance bounds")
    click.echo("PASS")


@cli.command()
@click.option("--alias-hz", "aliases", type=float, multiple=True, required=True,
              help="Alias frequency of each measurement")
@click.option("--bias-hz", "biases", type=float, multiple=True, required=True,
              help="Bias frequency of each measurement")
@click.option("--n", "harmonics", type=int, multiple=True, default=(80,), show_default=True,
              help="Alias harmonic, once for both measurements or once per measurement")
@click.option("--sample-rate", type=float, default=12500.0, show_default=True, help="f_SR in Hz")
@click.option("--tolerance", type=float, default=1.0, show_default=True,
              help="Match tolerance (Hz)")
@handle_errors
def disambiguate(
    aliases: Tuple[float, ...],
    biases: Tuple[float, ...],
    harmonics: Tuple[int, ...],
    sample_rate: float,
    tolerance: float,
) -> None:
    """Intersect target candidates from measurements at two bias frequencies."""
    if len(aliases) != 2 or len(biases) != 2:
        raise ConfigError("disambiguate needs exactly two --alias-hz and two --bias-hz values")
    if len(harmonics) not in (1, 2):
        raise ConfigError("give --n once or once per measurement")
    if len(harmonics) == 1:
        harmonics = harmonics * 2
    sets: List[List[float]] = [
        candidate_targets(a, b, n, sample_rate) for a, b, n in zip(aliases, biases, harmonics)
    ]
    _echo_json({
        "candidates": sets,
        "targets_hz": disambiguate_target(sets[0], sets[1], tolerance),
    })


@cli.command()
def presets() -> None:
    """List shipped presets."""
    for name in list_presets():
        click.echo(name)


def main() -> None:
    """Entry point for the CLI."""
    cli(obj={})


if __name__ == "__main__":
    main()
