"""Batch drivers for the partial-data trace and reconstruction experiments.

Every run writes plain-text artifacts into an output directory and a
``metrics.txt`` manifest of ``key=value`` lines. The manifest contains only
deterministic quantities; wall-clock timings go to ``timings.txt``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .bie import (
    CGOTraceSet,
    psi_offdiagonal,
    relative_l2,
    solve_traces_batched,
    standard_kernels,
)
from .dbar import (
    ZGrid,
    dbar_solve_m1,
    dbar_solve_m2,
    interpolate_to_zero,
    k_grid,
    reconstruct_m1,
    recover_gamma,
    scattering_S,
    scattering_t,
)
from .fem import cell_indices, delta_dn, refined_mesh
from .geometry import arc_subset, boundary_grid, make_phantom
from .haar import build_haar
from .io import format_kv, format_number, parse_number, read_config, write_matrix, write_pgm
from .lippmann import lippmann_schwinger, schrodinger_potential


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class ConfigError(ValueError):
    pass


def _list(s: str, conv) -> list:
    return [conv(x.strip()) for x in s.split(",") if x.strip()]


def _frac_name(f: Fraction) -> str:
    return "1" if f == 1 else f"{f.numerator}over{f.denominator}"


def _k_name(k) -> str:
    """Compact label for a frequency in metric keys: ``0.5``, ``-4i``, ``3+3i``."""
    k = complex(k)
    if k.imag == 0:
        return f"{k.real:g}"
    im = f"{k.imag:+g}i"
    return im.lstrip("+") if k.real == 0 else f"{k.real:g}{im}"


@dataclass
class ExperimentConfig:
    """Validated experiment parameters.

    ``J`` is the full-boundary basis size; an arc of relative length ``f``
    uses ``f * J`` functions. ``radii`` and ``dk`` pair up one-to-one.
    """

    test: int = 1
    phantom: str = ""
    amplitude: float | None = None
    center: complex | None = None
    radius: float | None = None
    fractions: list = field(default_factory=lambda: [Fraction(1), Fraction(3, 4), Fraction(1, 2), Fraction(1, 4)])
    L: int = 256
    J: int = 256
    ks: list = field(default_factory=lambda: [0.5 + 0j, -4j])
    trace_k: complex = 3 + 3j
    radii: list = field(default_factory=lambda: [3.0, 4.0])
    dk: list = field(default_factory=lambda: [0.25, 0.2])
    method: int = 0
    mesh_level: int = 0
    z_n: int = 64
    oracle_n: int = 256
    tol: float = 1e-10
    residual_limit: float = 1e-8
    noise: float = 0.0
    seed: int = 0
    pgm_min: float = 0.5
    pgm_max: float = 2.5

    def __post_init__(self):
        if not self.phantom:
            self.phantom = "c2" if self.test == 1 else "discontinuous"
        if not self.method:
            self.method = 1 if self.test == 1 else 2
        self.validate()

    @classmethod
    def from_dict(cls, d: dict[str, str], test: int | None = None) -> ExperimentConfig:
        conv = {
            "test": int,
            "phantom": str,
            "amplitude": float,
            "center": parse_number,
            "radius": float,
            "fractions": lambda s: _list(s, Fraction),
            "L": int,
            "J": int,
            "ks": lambda s: _list(s, parse_number),
            "trace_k": parse_number,
            "radii": lambda s: _list(s, float),
            "dk": lambda s: _list(s, float),
            "method": int,
            "mesh_level": int,
            "z_n": int,
            "oracle_n": int,
            "tol": float,
            "residual_limit": float,
            "noise": float,
            "seed": int,
            "pgm_min": float,
            "pgm_max": float,
        }
        kw = {}
        for key, value in d.items():
            if key not in conv:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kw[key] = conv[key](value)
            except (ValueError, ZeroDivisionError) as err:
                raise ConfigError(f"bad value for {key}: {value!r} ({err})") from None
        if test is not None:
            kw["test"] = test
        return cls(**kw)

    @classmethod
    def from_file(cls, path, test: int | None = None) -> ExperimentConfig:
        return cls.from_dict(read_config(path), test)

    def validate(self) -> None:
        if self.test not in (1, 2):
            raise ConfigError("test must be 1 or 2")
        if self.method not in (1, 2):
            raise ConfigError("method must be 1 or 2")
        if self.L < 4 or self.L % 2:
            raise ConfigError("L must be an even integer >= 4")
        if not 0 < self.J <= self.L:
            raise ConfigError("need 0 < J <= L")
        if not self.fractions:
            raise ConfigError("no fractions")
        for f in self.fractions:
            if not 0 < f <= 1 or (f * self.L).denominator != 1 or (f * self.J).denominator != 1:
                raise ConfigError(f"fraction {f} does not align with L={self.L}, J={self.J}")
        if any(k == 0 for k in self.ks) or self.trace_k == 0:
            raise ConfigError("k = 0 is excluded")
        if len(self.radii) != len(self.dk):
            raise ConfigError("radii and dk must have the same length")
        if any(r <= 0 for r in self.radii) or any(d <= 0 for d in self.dk):
            raise ConfigError("radii and dk must be positive")
        if self.z_n < 8 or self.z_n % 2:
            raise ConfigError("z_n must be an even integer >= 8")
        if self.pgm_max <= self.pgm_min:
            raise ConfigError("pgm_max must exceed pgm_min")

    def field(self):
        params = {k: v for k, v in (("amplitude", self.amplitude), ("center", self.center), ("radius", self.radius)) if v is not None}
        return make_phantom(self.phantom, **params)


@dataclass
class MetricsReport:
    """Ordered metrics, pass/fail residual checks and the files written."""

    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def check_residual(self, name: str, residual: float, limit: float) -> None:
        self.metrics[f"residual.{name}"] = residual
        self.checks[name] = bool(np.isfinite(residual) and residual <= limit)

    def manifest(self) -> str:
        out = {}
        for k, v in self.metrics.items():
            if isinstance(v, (float, complex, np.floating, np.complexfloating)):
                v = format_number(v)
            out[k] = v
        for k, v in self.checks.items():
            out[f"check.{k}"] = "pass" if v else "fail"
        out["files"] = ";".join(self.files)
        return format_kv(out)

    def write(self, out: Path) -> None:
        (out / "metrics.txt").write_text(self.manifest())
        (out / "timings.txt").write_text(format_kv({k: f"{v:.3f}" for k, v in self.timings.items()}))


class _Stages:
    """Wrap failures with a stage tag and record timings."""

    def __init__(self, report: MetricsReport):
        self.report = report

    def __call__(self, stage, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except StageError:
            raise
        except Exception as err:  # noqa: BLE001 - re-raised with the stage tag
            raise StageError(stage, err) from err
        finally:
            self.report.timings[stage] = self.report.timings.get(stage, 0.0) + time.perf_counter() - t0


def _setup(config: ExperimentConfig, report: MetricsReport):
    run = _Stages(report)
    field_ = run("phantom", config.field)
    grid = run("grid", boundary_grid, config.L)
    mesh = run("mesh", refined_mesh, config.L, config.mesh_level)
    dns = {}
    for f in config.fractions:
        arc, sub = run("haar", arc_subset, grid, f)
        basis = run("haar", build_haar, arc, int(f * config.J), sub)
        dn = run("dn", delta_dn, field_, basis, mesh)
        if config.noise:
            dn = dn.with_noise(config.noise, config.seed)
        dns[f] = dn
    return run, field_, grid, mesh, dns


def cgo_traces(kinds, dns: dict, ks, grid, chunk: int = 32, tol: float = 1e-10) -> dict:
    """Traces of each kind for every arc, sharing kernel evaluations.

    Kernels ``G_k`` are formed once per chunk on the full grid and sliced
    for each arc. The ``u2`` equation at ``conj(k)`` uses the same kernel
    as the ``u1`` equation at ``k``, so ``ks`` must be closed under
    conjugation when ``u2`` is requested.
    """
    ks = np.asarray(ks, dtype=complex)
    pos = {complex(k): i for i, k in enumerate(ks)}
    if "u2" in kinds:
        try:
            conj_pos = np.array([pos[complex(np.conj(k))] for k in ks])
        except KeyError:
            raise ValueError("u2 traces need a conjugation-closed k list") from None
    idx = {f: cell_indices(dn.basis, grid.L) for f, dn in dns.items()}
    out = {(kind, f): np.empty((len(ix), ks.size), complex) for kind in kinds for f, ix in idx.items()}
    res = {key: 0.0 for key in out}
    for s in range(0, ks.size, chunk):
        sl = slice(s, s + chunk)
        kc = ks[sl]
        K = standard_kernels(grid, kc)
        for f, dn in dns.items():
            ix = idx[f]
            Ks = K if len(ix) == grid.L else K[:, ix][:, :, ix]
            for kind in kinds:
                if kind == "u2":
                    vals, r, _ = solve_traces_batched("u2", dn, np.conj(kc), Ks, tol)
                    out[(kind, f)][:, conj_pos[sl]] = vals
                else:
                    vals, r, _ = solve_traces_batched(kind, dn, kc, Ks, tol)
                    out[(kind, f)][:, sl] = vals
                res[(kind, f)] = max(res[(kind, f)], float(np.max(r)))
    return {
        key: CGOTraceSet(key[0], ks, v, dns[key[1]].basis.grid, str(key[1]), dns[key[1]].tag, np.full(ks.size, res[key]))
        for key, v in out.items()
    }


def _write_traces(out: Path, name: str, ts: CGOTraceSet, report: MetricsReport) -> None:
    """Columns: theta, then one complex column per k."""
    data = np.column_stack([ts.grid.theta.astype(complex), ts.values])
    header = {"kind": ts.kind, "fraction": ts.fraction, "phantom": ts.tag, "k": ";".join(format_number(k) for k in ts.ks)}
    write_matrix(out / name, data, header)
    report.files.append(name)


# ---------------------------------------------------------------------------


def run_test1(config: ExperimentConfig, out) -> MetricsReport:
    """Oracle, full-data and partial-data CGO traces at the configured ``k``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = MetricsReport()
    run, field_, grid, mesh, dns = _setup(config, report)
    kind_full, kind_part = ("psi", "omega") if config.method == 1 else ("u1", "u1")
    ks = np.asarray(config.ks, dtype=complex)
    report.metrics.update(
        {"test": 1, "phantom": field_.tag, "method": config.method, "L": config.L, "J": config.J, "mesh_vertices": mesh.n_vertices}
    )

    full_f = Fraction(1)
    if full_f not in dns:
        arc, sub = arc_subset(grid, 1)
        dns = {full_f: run("dn", delta_dn, field_, build_haar(arc, config.J, sub), mesh), **dns}
    traces = {}
    for f, dn in dns.items():
        kind = kind_full if f == 1 else kind_part
        traces[f] = run("bie", cgo_traces, [kind], {f: dn}, ks, grid, tol=config.tol)[(kind, f)]
        report.check_residual(f"bie.{_frac_name(f)}", float(traces[f].residuals.max()), config.residual_limit)
        _write_traces(out, f"traces_{_frac_name(f)}.txt", traces[f], report)

    oracle = None
    if field_.smoothness == "C2" and config.method == 1:
        P = run("oracle", schrodinger_potential, field_, config.oracle_n)
        cols = []
        for k in ks:
            sol = run("oracle", lippmann_schwinger, P, k, config.tol)
            cols.append(sol.psi_trace(grid))
        oracle = CGOTraceSet("psi", ks, np.column_stack(cols), grid, "1", field_.tag)
        _write_traces(out, "traces_oracle.txt", oracle, report)

    full = traces[full_f]
    for i, k in enumerate(ks):
        kn = _k_name(k)
        if oracle is not None:
            report.metrics[f"error.full_vs_oracle.k{kn}"] = relative_l2(full.values[:, i], oracle.values[:, i])
        for f, ts in traces.items():
            if f == 1:
                continue
            ix = cell_indices(dns[f].basis, grid.L)
            report.metrics[f"error.{_frac_name(f)}_vs_full.k{kn}"] = relative_l2(ts.values[:, i], full.values[ix, i])
    report.write(out)
    return report


def _export_scattering(out: Path, s, R: float, report: MetricsReport) -> None:
    name = f"{s.kind}_{_frac_name(Fraction(s.fraction))}_R{R:g}"
    img = s.image()
    write_matrix(out / f"{name}.txt", img, {"kind": s.kind, "fraction": s.fraction, "R": R, "dk": s.grid.dk})
    report.files.append(f"{name}.txt")
    scale = float(np.nanmax(np.abs(img))) or 1.0
    for part, arr in (("re", img.real), ("im", img.imag)):
        write_pgm(out / f"{name}_{part}.pgm", arr, -scale, scale)
        report.files.append(f"{name}_{part}.pgm")
    report.metrics[f"pgm_scale.{name}"] = scale


def reconstruct(config: ExperimentConfig, dns: dict, grid, R: float, dk: float, run, report: MetricsReport, out: Path | None = None) -> dict:
    """Full D-bar pipeline on one k-grid for every arc; returns reconstructions by fraction."""
    kg = k_grid(R, dk)
    ks = kg.ks[kg.punctured]
    zg = ZGrid(config.z_n)
    zs = zg.z[zg.active]
    tag = f"R{R:g}"
    recs = {}
    if config.method == 1:
        traces = run("bie", cgo_traces, ["psi"], dns, ks, grid, tol=config.tol)
    else:
        traces = run("bie", cgo_traces, ["u1", "u2"], dns, ks, grid, tol=config.tol)
    for f, dn in dns.items():
        fn = _frac_name(f)
        if config.method == 1:
            ts = traces[("psi", f)]
            report.check_residual(f"bie.{fn}.{tag}", float(ts.residuals.max()), config.residual_limit)
            t = run("scattering", lambda: interpolate_to_zero(scattering_t(dn, ts, kg)))
            if out is not None:
                _export_scattering(out, t, R, report)
            mu0, st = run("dbar", dbar_solve_m1, t, zs, tol=config.tol)
            rec = reconstruct_m1(mu0, zg, str(f), R)
        else:
            u1, u2 = traces[("u1", f)], traces[("u2", f)]
            report.check_residual(f"bie.{fn}.{tag}", float(max(u1.residuals.max(), u2.residuals.max())), config.residual_limit)
            S12, S21 = run("scattering", scattering_S, psi_offdiagonal("12", dn, u2), psi_offdiagonal("21", dn, u1), kg)
            S12, S21 = run("scattering", interpolate_to_zero, S12), run("scattering", interpolate_to_zero, S21)
            if out is not None:
                _export_scattering(out, S21, R, report)
            M, st = run("dbar", dbar_solve_m2, S12, S21, zs, tol=config.tol)
            rec = run("recovery", recover_gamma, M, zg, 2, str(f), R)
        report.check_residual(f"dbar.{fn}.{tag}", st["residual"], config.residual_limit)
        recs[f] = rec
    return recs


def run_test2(config: ExperimentConfig, out) -> MetricsReport:
    """Partial-data reconstructions for every arc and truncation radius."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = MetricsReport()
    run, field_, grid, mesh, dns = _setup(config, report)
    report.metrics.update(
        {"test": 2, "phantom": field_.tag, "method": config.method, "L": config.L, "J": config.J, "mesh_vertices": mesh.n_vertices}
    )

    # traces at a single frequency for inspection
    kt = np.array([config.trace_k, np.conj(config.trace_k)])
    tr = run("bie", cgo_traces, ["u1", "u2"], dns, kt, grid, tol=config.tol)
    for (kind, f), ts in sorted(tr.items(), key=lambda kv: (kv[0][0], -kv[0][1])):
        one = CGOTraceSet(kind, kt[:1], ts.values[:, :1], ts.grid, ts.fraction, ts.tag)
        _write_traces(out, f"traces_{kind}_{_frac_name(f)}.txt", one, report)

    for R, dk in zip(config.radii, config.dk):
        recs = reconstruct(config, dns, grid, R, dk, run, report, out)
        for f, rec in recs.items():
            name = f"gamma_{_frac_name(f)}_R{R:g}"
            m = rec.compute_metrics(field_)
            for key, v in m.items():
                report.metrics[f"{key}.{_frac_name(f)}.R{R:g}"] = v
            write_matrix(out / f"{name}.txt", rec.gamma, {"fraction": str(f), "R": R, "method": rec.method, "z_n": config.z_n, "extent": rec.zgrid.extent})
            write_pgm(out / f"{name}.pgm", rec.gamma.real, config.pgm_min, config.pgm_max)
            report.files += [f"{name}.txt", f"{name}.pgm"]
    report.metrics["pgm_min"] = config.pgm_min
    report.metrics["pgm_max"] = config.pgm_max
    report.write(out)
    return report


def run_experiment(config: ExperimentConfig, out) -> MetricsReport:
    return run_test1(config, out) if config.test == 1 else run_test2(config, out)
