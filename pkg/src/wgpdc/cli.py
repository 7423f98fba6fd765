"""``wgpdc`` command line: run pipeline stages from a JSON config and write data files.

Every command writes plain CSV / JSON / PGM files into the output
directory and updates ``manifest.json`` there (file hashes only, so
repeated runs leave the whole tree byte-identical).

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from dataclasses import dataclass, field
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import fit as fitmod
from .dispersion import Polarization, PolingGrating, SellmeierModel, WavelengthRangeError, default_model
from .modesolver import CutoffError, GridError, ModeLabel, WaveguideSpec, covering_grid, mode_profile, solve_modes
from .pdc import (
    CLUSTER_LINKAGE_NM,
    DEFAULT_THRESHOLD,
    PEAK_LABELS,
    SEARCH_WINDOW_NM,
    PumpSpec,
    SpectralGrid,
    build_jsas,
    cluster_triplets,
    enumerate_triplets,
    marginal_spectra,
    peak_triplets,
)
from .quantum import (
    BELL_BASES,
    DegenerateInputError,
    SpectralFilter,
    apply_filters,
    bell_state,
    coincidence_from_jsas,
    schmidt,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("modes", "peaks", "spectrum", "jsa", "schmidt", "coinc", "render", "fit")
SCHMIDT_COEFFICIENTS_OUT = 20


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class GridSettings:
    spectral_half_span_nm: float = 60.0
    spectral_points: int = 1024
    local_points: int = 256
    spatial_points: int = 512
    image_points: int = 256


@dataclass(frozen=True)
class FilterSettings:
    signal_fwhm_nm: float = 3.0
    idler_fwhm_nm: float = 10.0
    shape: str = "rect"


@dataclass(frozen=True)
class RunConfig:
    waveguide: WaveguideSpec
    pump: PumpSpec
    grid: GridSettings = field(default_factory=GridSettings)
    filters: FilterSettings = field(default_factory=FilterSettings)
    output_dir: Path = Path("out")
    threshold: float = DEFAULT_THRESHOLD
    window_nm: tuple = SEARCH_WINDOW_NM
    linkage_nm: float = CLUSTER_LINKAGE_NM
    dispersion_file: Path | None = None


def _section(doc, name, allowed):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"'{name}' must be an object")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(sorted(extra))}")
    return sec


def load_config(path) -> RunConfig:
    """Parse and validate a run config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    known = {"waveguide", "pump", "dispersion_file", "grid", "filters", "output_dir", "threshold", "window_nm", "linkage_nm"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(extra))}")
    base = path.parent
    try:
        disp_file = doc.get("dispersion_file")
        if disp_file is not None:
            disp_file = base / disp_file
            if not disp_file.is_file():
                raise ConfigError(f"dispersion file not found: {disp_file}")
            try:
                model = SellmeierModel.from_json(disp_file)
            except (KeyError, json.JSONDecodeError) as exc:
                raise ConfigError(f"{disp_file}: malformed dispersion file ({exc})") from None
        else:
            model = default_model()

        wg = _section(doc, "waveguide", ("width_um", "depth_um", "delta_n", "poling_period_um", "length_mm", "orientation"))
        missing = {"width_um", "depth_um", "delta_n", "poling_period_um"} - set(wg)
        if missing:
            raise ConfigError(f"waveguide is missing {', '.join(sorted(missing))}")
        spec = WaveguideSpec(
            float(wg["width_um"]),
            float(wg["depth_um"]),
            float(wg["delta_n"]),
            PolingGrating(float(wg["poling_period_um"])),
            length_mm=float(wg.get("length_mm", 10.0)),
            dispersion=model,
            orientation=wg.get("orientation", "width_horizontal"),
        )
        pp = _section(doc, "pump", ("center_nm", "fwhm_nm", "mode_fractions"))
        kwargs = {k: float(pp[k]) for k in ("center_nm", "fwhm_nm") if k in pp}
        if "mode_fractions" in pp:
            kwargs["mode_fractions"] = {ModeLabel.parse(k): float(v) for k, v in pp["mode_fractions"].items()}
        pump = PumpSpec(**kwargs)
        grid = GridSettings(**_section(doc, "grid", GridSettings.__dataclass_fields__))
        for name, value in vars(grid).items():
            if isinstance(value, float) and not value > 0:
                raise ConfigError(f"grid.{name} must be positive")
            if isinstance(value, int) and value < 16:
                raise ConfigError(f"grid.{name} must be at least 16")
        filters = FilterSettings(**_section(doc, "filters", FilterSettings.__dataclass_fields__))
        SpectralFilter(0.0, filters.signal_fwhm_nm, filters.shape)
        SpectralFilter(0.0, filters.idler_fwhm_nm, filters.shape)
        window = tuple(float(v) for v in doc.get("window_nm", SEARCH_WINDOW_NM))
        if len(window) != 2 or not window[0] < window[1]:
            raise ConfigError("window_nm must be an ordered pair")
        threshold = float(doc.get("threshold", DEFAULT_THRESHOLD))
        if not 0 < threshold < 1:
            raise ConfigError("threshold must lie in (0, 1)")
        linkage = float(doc.get("linkage_nm", CLUSTER_LINKAGE_NM))
        if not linkage > 0:
            raise ConfigError("linkage_nm must be positive")
    except (TypeError, ValueError, AttributeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return RunConfig(
        spec, pump, grid, filters, base / doc.get("output_dir", "out"), threshold, window, linkage, disp_file
    )


# --------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    return f"{float(x):.10g}"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def pgm_bytes(image) -> bytes:
    """8-bit binary PGM scaled to a maximum of 255; row 0 is the top."""
    img = np.asarray(image, dtype=float)
    top = img.max()
    scaled = np.zeros(img.shape) if top <= 0 else img / top * 255
    data = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    h, w = data.shape
    return f"P5\n{w} {h}\n255\n".encode() + data.tobytes()


class Writer:
    def __init__(self, out_dir: Path, command: str):
        self.out = Path(out_dir)
        self.command = command
        self.files = {}

    def write(self, name, payload):
        self.out.mkdir(parents=True, exist_ok=True)
        data = payload.encode() if isinstance(payload, str) else payload
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()
        return self.out / name

    def json(self, name, obj):
        return self.write(name, json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self):
        path = self.out / "manifest.json"
        manifest = {"files": {}}
        if path.is_file():
            try:
                manifest = json.loads(path.read_text())
            except json.JSONDecodeError:
                pass
        try:
            pkg_version = version("artifact")
        except PackageNotFoundError:
            pkg_version = "unknown"
        manifest["package_version"] = pkg_version
        for name, digest in self.files.items():
            manifest.setdefault("files", {})[name] = {"command": self.command, "sha256": digest}
        self.out.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# shared pipeline pieces


def _triplets_and_clusters(cfg: RunConfig):
    triplets = enumerate_triplets(cfg.waveguide, cfg.pump, cfg.threshold, cfg.window_nm, n_grid=cfg.grid.spatial_points)
    return triplets, cluster_triplets(triplets, cfg.linkage_nm)


def _cluster(clusters, peak):
    for c in clusters:
        if c.label == peak:
            return c
    found = ", ".join(c.label for c in clusters) or "none"
    raise NumericalFailure(f"the model has no peak cluster {peak} (clusters: {found})")


def _main_grid(cfg: RunConfig) -> SpectralGrid:
    return SpectralGrid.around(cfg.pump.degenerate_nm, cfg.grid.spectral_half_span_nm, cfg.grid.spectral_points)


def _filters(cfg, signal_nm, idler_nm):
    f = cfg.filters
    return SpectralFilter(signal_nm, f.signal_fwhm_nm, f.shape), SpectralFilter(idler_nm, f.idler_fwhm_nm, f.shape)


def _filter_grid(cfg, fs: SpectralFilter, fi: SpectralFilter) -> SpectralGrid:
    # rect: a margin past the edges; gauss: out to 1.5 FWHM
    reach = 0.55 if fs.shape == "rect" else 1.5
    n = cfg.grid.local_points
    return SpectralGrid(
        fs.center_nm - reach * fs.fwhm_nm, fs.center_nm + reach * fs.fwhm_nm,
        fi.center_nm - reach * fi.fwhm_nm, fi.center_nm + reach * fi.fwhm_nm, n, n,
    )


def _weighted_intensity(jsas, pump):
    return sum(pump.fraction(j.pump_mode) * j.intensity for j in jsas)


# --------------------------------------------------------------------------
# commands


def cmd_modes(cfg: RunConfig, wavelength_nm=None, pol="Y", out=None):
    lam = cfg.pump.degenerate_nm if wavelength_nm is None else float(wavelength_nm)
    modes = solve_modes(cfg.waveguide, Polarization(pol), lam)
    rows = [[md.label.m, md.label.n, _fmt(md.n_eff)] for md in modes]
    text = _csv_text(["label_m", "label_n", "n_eff"], rows)
    w = Writer(out or cfg.output_dir, "modes")
    w.write(f"modes_{pol}_{lam:.1f}nm.csv", text)
    w.finish()
    print(f"{len(modes)} guided {pol} mode(s) at {lam:.2f} nm")
    sys.stdout.write(text)
    return modes


def cmd_peaks(cfg: RunConfig, out=None):
    triplets, clusters = _triplets_and_clusters(cfg)
    label_of = {id(t): c.label for c in clusters for t in c.triplets}
    rows = [
        [str(t.pump.label), str(t.signal.label), str(t.idler.label), _fmt(t.overlap),
         _fmt(t.peak[0]), _fmt(t.peak[1]), label_of[id(t)], int(t.higher_order)]
        for t in triplets
    ]
    header = ["pump_mode", "signal_mode", "idler_mode", "overlap_per_um", "signal_nm", "idler_nm", "cluster", "higher_order"]
    w = Writer(out or cfg.output_dir, "peaks")
    w.write("peaks.csv", _csv_text(header, rows))
    crow = [[c.label, _fmt(c.signal_nm), _fmt(c.idler_nm), len(c.triplets), int(c.higher_order),
             " ".join(str(t).replace(" ", "") for t in c.triplets)] for c in clusters]
    w.write("clusters.csv", _csv_text(["cluster", "signal_nm", "idler_nm", "n_processes", "higher_order", "processes"], crow))
    w.finish()
    for c in clusters:
        procs = "; ".join(str(t) for t in c.triplets)
        print(f"{c.label:>3}  {c.signal_nm:8.2f} nm / {c.idler_nm:8.2f} nm  {procs}")
    return triplets, clusters


def cmd_spectrum(cfg: RunConfig, out=None):
    triplets, _ = _triplets_and_clusters(cfg)
    if not triplets:
        raise NumericalFailure("no phase-matched processes, nothing to plot")
    ls, s, li, i = marginal_spectra(build_jsas(triplets, cfg.pump, _main_grid(cfg)), cfg.pump)
    top = max(s.max(), i.max())
    rows = [[_fmt(a), _fmt(b / top), _fmt(c), _fmt(d / top)] for a, b, c, d in zip(ls, s, li, i)]
    w = Writer(out or cfg.output_dir, "spectrum")
    w.write("spectrum.csv", _csv_text(["signal_nm", "signal", "idler_nm", "idler"], rows))
    w.finish()
    print(f"marginal spectra of {len(triplets)} processes written")
    return ls, s, li, i


def cmd_jsa(cfg: RunConfig, peak, out=None):
    _, clusters = _triplets_and_clusters(cfg)
    c = _cluster(clusters, peak)
    n = cfg.grid.local_points
    grid = SpectralGrid(c.signal_nm - 12, c.signal_nm + 12, c.idler_nm - 20, c.idler_nm + 20, n, n)
    inten = _weighted_intensity(build_jsas(c.triplets, cfg.pump, grid), cfg.pump)
    inten = inten / inten.max()
    ls, li = grid.signal_nm, grid.idler_nm
    rows = [[_fmt(ls[a]), _fmt(li[b]), _fmt(inten[a, b])] for a in range(n) for b in range(n)]
    w = Writer(out or cfg.output_dir, "jsa")
    w.write(f"jsa_{peak}.csv", _csv_text(["signal_nm", "idler_nm", "intensity"], rows))
    # image: signal increasing to the right, idler increasing upward
    w.write(f"jsa_{peak}.pgm", pgm_bytes(inten.T[::-1]))
    w.finish()
    print(f"JSA of peak {peak} ({len(c.triplets)} process(es)) on {n}x{n} grid")
    return grid, inten


def cmd_schmidt(cfg: RunConfig, peak, out=None):
    triplets, clusters = _triplets_and_clusters(cfg)
    c = _cluster(clusters, peak)
    fs, fi = _filters(cfg, c.signal_nm, c.idler_nm)
    grid = _filter_grid(cfg, fs, fi)
    report = {"peak": peak, "filters": {"signal": vars(fs), "idler": vars(fi)}, "processes": [str(t) for t in c.triplets]}
    decomps = {}
    for jsa in build_jsas(c.triplets, cfg.pump, grid):
        dec = schmidt(apply_filters(jsa, fs, fi))
        decomps[str(jsa.pump_mode)] = dec.to_dict(SCHMIDT_COEFFICIENTS_OUT)
    report["by_pump_mode"] = decomps
    if peak in BELL_BASES:
        report["bell"] = _bell_report(cfg, triplets, peak)
    w = Writer(out or cfg.output_dir, "schmidt")
    w.json(f"schmidt_{peak}.json", report)
    w.finish()
    for mode, d in decomps.items():
        print(f"peak {peak}, pump {mode}: K = {d['schmidt_number']:.4f}")
    return report


def _bell_report(cfg, triplets, peak):
    ref = peak_triplets(triplets, peak)
    basis, name = BELL_BASES[peak]
    doc = {
        "state": name,
        "basis": [[str(s), str(i)] for s, i in basis],
        "coefficients": [1 / math.sqrt(2), 1 / math.sqrt(2)],
        "fidelity_note": "F = (1 + O) / 2, O = normalized spectral overlap of the two filtered process JSAs; a diagnostic, not a measured fidelity",
    }
    if len(ref) != 2:
        doc["error"] = f"model finds {len(ref)} of the 2 processes"
        return doc
    fs, fi = _filters(cfg, np.mean([t.peak[0] for t in ref]), np.mean([t.peak[1] for t in ref]))
    grid = _filter_grid(cfg, fs, fi)
    jsas = [apply_filters(build_jsas([t], cfg.pump, grid)[0], fs, fi) for t in ref]
    _, fidelity, overlap = bell_state(peak, ref, jsas)
    doc.update({"overlap": overlap, "fidelity": fidelity, "process_peaks_nm": [list(t.peak) for t in ref]})
    return doc


def cmd_coinc(cfg: RunConfig, out=None):
    triplets, clusters = _triplets_and_clusters(cfg)
    centers = [_cluster(clusters, p) for p in PEAK_LABELS]
    pairs = [_filters(cfg, c.signal_nm, c.idler_nm) for c in centers]
    sig = [p[0] for p in pairs]
    idl = [p[1] for p in pairs]
    m = coincidence_from_jsas(build_jsas(triplets, cfg.pump, _main_grid(cfg)), cfg.pump, sig, idl)
    rows = [[PEAK_LABELS[r]] + [_fmt(v) for v in m[r]] for r in range(len(PEAK_LABELS))]
    w = Writer(out or cfg.output_dir, "coinc")
    w.write("coincidences.csv", _csv_text(["signal\\idler", *PEAK_LABELS], rows))
    w.finish()
    print(np.array2string(m, precision=4, suppress_small=True))
    return m


def cmd_render(cfg: RunConfig, peak, arm="signal", out=None):
    _, clusters = _triplets_and_clusters(cfg)
    c = _cluster(clusters, peak)
    modes = [t.signal if arm == "signal" else t.idler for t in c.triplets]
    grid = covering_grid(modes, n=cfg.grid.image_points)
    img = np.zeros((grid.ny, grid.nx))
    for t, md in zip(c.triplets, modes):
        weight = cfg.pump.fraction(t.pump.label) * t.overlap**2
        img += weight * mode_profile(md, grid) ** 2
    # grid rows run upward in y; flip so the air side is the top row
    w = Writer(out or cfg.output_dir, "render")
    w.write(f"mode_{peak}_{arm}.pgm", pgm_bytes(img[::-1]))
    w.finish()
    print(f"{arm} intensity of peak {peak}: {', '.join(str(m.label) for m in modes)}")
    return img[::-1]


def cmd_fit(cfg: RunConfig, measured_path, out=None):
    try:
        measured = fitmod.read_measured_csv(measured_path)
        wg = cfg.waveguide
        problem = fitmod.FitProblem(measured, pump=cfg.pump, length_mm=wg.length_mm, dispersion=wg.dispersion)
    except FileNotFoundError:
        raise ConfigError(f"measured-peak file not found: {measured_path}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{measured_path}: {exc}") from None
    seed = fitmod.FitParams(wg.poling.period_um, wg.width_um, wg.depth_um, wg.delta_n)
    if not problem.in_bounds(seed):
        raise ConfigError(f"config waveguide {seed.to_dict()} lies outside the fit bounds")
    result = fitmod.fit(problem, seed)
    w = Writer(out or cfg.output_dir, "fit")
    w.json("fit_report.json", result.to_dict())
    w.finish()
    p = result.params
    print(
        f"period {p.period_um:.4f} um, width {p.width_um:.3f} um, depth {p.depth_um:.3f} um, "
        f"delta_n {p.delta_n:.5f}; objective {result.objective:.3g} nm^2 after {result.n_evaluations} evaluations"
    )
    return result


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wgpdc", description="Spatial-mode PDC model of a multimode waveguide.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="run config (JSON)")
    ap.add_argument("--peak", choices=PEAK_LABELS, help="peak label for jsa/schmidt/render")
    ap.add_argument("--arm", choices=("signal", "idler"), default="signal")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--wavelength", type=float, help="wavelength in nm for 'modes' (default: degeneracy)")
    ap.add_argument("--pol", choices=[p.value for p in Polarization], default="Y")
    ap.add_argument("--measured", help="measured peaks CSV for 'fit'")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out) if args.out else None
        if args.command in ("jsa", "schmidt", "render") and args.peak is None:
            raise ConfigError(f"'{args.command}' needs --peak")
        if args.command == "fit" and not args.measured:
            raise ConfigError("'fit' needs --measured")
        dispatch = {
            "modes": lambda: cmd_modes(cfg, args.wavelength, args.pol, out),
            "peaks": lambda: cmd_peaks(cfg, out),
            "spectrum": lambda: cmd_spectrum(cfg, out),
            "jsa": lambda: cmd_jsa(cfg, args.peak, out),
            "schmidt": lambda: cmd_schmidt(cfg, args.peak, out),
            "coinc": lambda: cmd_coinc(cfg, out),
            "render": lambda: cmd_render(cfg, args.peak, args.arm, out),
            "fit": lambda: cmd_fit(cfg, args.measured, out),
        }
        dispatch[args.command]()
    except (ConfigError, WavelengthRangeError) as exc:
        print(f"wgpdc: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, CutoffError, GridError, DegenerateInputError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"wgpdc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # validation errors from the model layer surface here
        print(f"wgpdc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
