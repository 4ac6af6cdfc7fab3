"""Complex transmission sweeps: data model, Touchstone/CSV ingestion, manifests.

Everything is converted to Hz and linear complex S21 at the boundary.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MIN_POINTS = 8

FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}

CSV_HEADERS = {
    "reim": ("freq_hz", "re", "im"),
    "magdbphasedeg": ("freq_hz", "mag_db", "phase_deg"),
}


class SpectrumFormatError(ValueError):
    """Malformed spectrum file; ``line`` is the 1-based line number if known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class Axis(str, enum.Enum):
    POWER = "power"
    TEMPERATURE = "temperature"


class CsvSchema(str, enum.Enum):
    REIM = "reim"
    MAG_DB_PHASE_DEG = "magdbphasedeg"


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ComplexSpectrum:
    freqs_hz: np.ndarray
    s21: np.ndarray
    power_dbm: float | None = None
    temperature_k: float | None = None
    label: str = ""

    def __post_init__(self):
        f = _frozen(self.freqs_hz, float)
        s = _frozen(self.s21, complex)
        if f.ndim != 1 or s.ndim != 1:
            raise ValueError("freqs_hz and s21 must be one-dimensional")
        if f.size != s.size:
            raise ValueError(f"length mismatch: {f.size} frequencies, {s.size} S21 samples")
        if f.size < MIN_POINTS:
            raise ValueError(f"need at least {MIN_POINTS} samples, got {f.size}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise ValueError("spectrum contains non-finite values")
        bad = np.nonzero(np.diff(f) <= 0)[0]
        if bad.size:
            raise ValueError(f"frequencies not strictly increasing at sample {bad[0] + 1}")
        for name in ("power_dbm", "temperature_k"):
            v = getattr(self, name)
            if v is not None and not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "freqs_hz", f)
        object.__setattr__(self, "s21", s)

    def __len__(self):
        return self.freqs_hz.size

    def scaled(self, factor):
        """Copy with S21 multiplied by a complex constant."""
        return ComplexSpectrum(self.freqs_hz, self.s21 * factor, self.power_dbm,
                               self.temperature_k, self.label)

    def with_meta(self, **kw):
        fields_ = dict(freqs_hz=self.freqs_hz, s21=self.s21, power_dbm=self.power_dbm,
                       temperature_k=self.temperature_k, label=self.label)
        fields_.update(kw)
        return ComplexSpectrum(**fields_)


@dataclass(frozen=True)
class SweepCampaign:
    spectra: tuple
    axis: Axis
    attenuation_db: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "spectra", tuple(self.spectra))
        object.__setattr__(self, "axis", Axis(self.axis))
        if not (math.isfinite(self.attenuation_db) and self.attenuation_db >= 0):
            raise ValueError("attenuation_db must be a finite value >= 0")
        attr = "power_dbm" if self.axis is Axis.POWER else "temperature_k"
        for i, s in enumerate(self.spectra):
            if getattr(s, attr) is None:
                raise ValueError(f"spectrum {i} ({s.label!r}) lacks {attr} required by a "
                                 f"{self.axis.value} campaign")


def dbm_to_watts(p_dbm):
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def remove_delay(freqs_hz, s21, delay_s):
    """Undo a cable delay: multiply by exp(+j 2 pi f tau)."""
    return np.asarray(s21) * np.exp(2j * np.pi * np.asarray(freqs_hz) * delay_s)


def _finish(path, freqs, s21, delay_s, rows, **meta):
    freqs = np.asarray(freqs, dtype=float)
    for k in range(1, freqs.size):
        if not freqs[k] > freqs[k - 1]:
            raise SpectrumFormatError(
                f"frequency column not strictly increasing ({freqs[k]:.12g} Hz after {freqs[k - 1]:.12g} Hz)",
                path, rows[k])
    s21 = np.asarray(s21, dtype=complex)
    if delay_s:
        s21 = remove_delay(freqs, s21, delay_s)
    if freqs.size < MIN_POINTS:
        raise SpectrumFormatError(f"only {freqs.size} data rows, need at least {MIN_POINTS}", path)
    meta.setdefault("label", Path(path).stem)
    return ComplexSpectrum(freqs, s21, **meta)


# ---------------------------------------------------------------- Touchstone

def _pair_to_complex(fmt, a, b):
    if fmt == "ri":
        return complex(a, b)
    mag = a if fmt == "ma" else 10.0 ** (a / 20.0)
    return mag * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))


def load_touchstone(path, *, delay_s=0.0, power_dbm=None, temperature_k=None, label=None):
    """Read S21 from a Touchstone v1 two-port file.

    Handles RI/MA/DB formats and Hz..GHz units; the reference resistance is
    ignored. Values for one frequency may wrap over several lines.
    """
    path = Path(path)
    unit, param, fmt = "ghz", "s", "ma"
    seen_option = False
    freqs, s21, rows = [], [], []
    pending, pending_line = [], None

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("!", 1)[0].strip()
            if not line:
                continue
            if line.startswith("#"):
                if seen_option:
                    continue  # v1: only the first option line counts
                seen_option = True
                tokens = line[1:].lower().split()
                i = 0
                while i < len(tokens):
                    tok = tokens[i]
                    if tok in FREQ_UNITS:
                        unit = tok
                    elif tok in ("s", "y", "z", "h", "g"):
                        param = tok
                    elif tok in ("ri", "ma", "db"):
                        fmt = tok
                    elif tok == "r":
                        i += 1
                        if i >= len(tokens):
                            raise SpectrumFormatError("option line ends after 'R'", path, lineno)
                        try:
                            float(tokens[i])
                        except ValueError:
                            raise SpectrumFormatError(
                                f"bad reference resistance {tokens[i]!r}", path, lineno) from None
                    else:
                        raise SpectrumFormatError(f"unknown option {tok!r}", path, lineno)
                    i += 1
                if param != "s":
                    raise SpectrumFormatError(
                        f"unsupported parameter type {param.upper()!r} (only S)", path, lineno)
                continue
            if line.startswith("["):
                raise SpectrumFormatError("Touchstone v2 keywords are not supported", path, lineno)
            try:
                values = [float(t) for t in line.split()]
            except ValueError:
                raise SpectrumFormatError(f"unparsable data row {line!r}", path, lineno) from None
            if not pending:
                pending_line = lineno
            pending.extend(values)
            if len(pending) > 9:
                raise SpectrumFormatError(
                    f"expected 9 values per two-port row, got {len(pending)}", path, pending_line)
            if len(pending) == 9:
                f, *v = pending
                freqs.append(f * FREQ_UNITS[unit])
                # v1 two-port order: S11, S21, S12, S22
                s21.append(_pair_to_complex(fmt, v[2], v[3]))
                rows.append(pending_line)
                pending = []

    if pending:
        raise SpectrumFormatError(
            f"truncated data row ({len(pending)} of 9 values)", path, pending_line)
    if not freqs:
        raise SpectrumFormatError("no data rows", path)
    return _finish(path, freqs, s21, delay_s, rows, power_dbm=power_dbm,
                   temperature_k=temperature_k,
                   **({"label": label} if label is not None else {}))


def write_touchstone(path, spec, fmt="ri", unit="ghz"):
    """Write a spectrum as a two-port .s2p (S11 = S22 = 0, S12 = S21)."""
    fmt = fmt.lower()
    scale = FREQ_UNITS[unit.lower()]
    lines = [f"! {spec.label}", f"# {unit.upper()} S {fmt.upper()} R 50"]

    def pair(z):
        if fmt == "ri":
            return z.real, z.imag
        mag = abs(z)
        ang = math.degrees(math.atan2(z.imag, z.real))
        if fmt == "ma":
            return mag, ang
        return (20.0 * math.log10(mag) if mag > 0 else -400.0), ang

    for f, z in zip(spec.freqs_hz, spec.s21):
        vals = [f / scale, *pair(0j), *pair(complex(z)), *pair(complex(z)), *pair(0j)]
        lines.append(" ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------- CSV

def load_csv(path, schema=None, *, delay_s=0.0, power_dbm=None, temperature_k=None, label=None):
    """Read a three-column CSV spectrum.

    ``schema`` is ``"reim"`` or ``"magdbphasedeg"``; when omitted it is taken
    from the header row.
    """
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = None
        for row in reader:
            if row and any(c.strip() for c in row):
                header = [c.strip().lower() for c in row]
                break
        if header is None:
            raise SpectrumFormatError("no data rows", path)
        if schema is None:
            matches = [s for s, h in CSV_HEADERS.items() if tuple(header[:3]) == h]
            if not matches:
                raise SpectrumFormatError(f"unrecognised header {header}", path, 1)
            schema = matches[0]
        schema = CsvSchema(schema.lower() if isinstance(schema, str) else schema)
        wanted = CSV_HEADERS[schema.value]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SpectrumFormatError(f"missing column(s) {', '.join(missing)}", path, 1)
        idx = [header.index(c) for c in wanted]

        freqs, s21, rows = [], [], []
        for row in reader:
            lineno = reader.line_num
            if not row or not any(c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SpectrumFormatError(
                    f"row has {len(row)} fields, header has {len(header)}", path, lineno)
            try:
                f, a, b = (float(row[i]) for i in idx)
            except ValueError:
                raise SpectrumFormatError(f"unparsable row {row}", path, lineno) from None
            if schema is CsvSchema.REIM:
                z = complex(a, b)
            else:
                z = 10.0 ** (a / 20.0) * complex(math.cos(math.radians(b)), math.sin(math.radians(b)))
            freqs.append(f)
            s21.append(z)
            rows.append(lineno)
    if not freqs:
        raise SpectrumFormatError("no data rows", path)
    return _finish(path, freqs, s21, delay_s, rows, power_dbm=power_dbm,
                   temperature_k=temperature_k,
                   **({"label": label} if label is not None else {}))


def write_csv(path, spec, schema="reim"):
    schema = CsvSchema(schema)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADERS[schema.value])
        for f, z in zip(spec.freqs_hz, spec.s21):
            z = complex(z)
            if schema is CsvSchema.REIM:
                w.writerow([repr(float(f)), repr(z.real), repr(z.imag)])
            else:
                w.writerow([repr(float(f)), repr(20.0 * math.log10(abs(z))),
                            repr(math.degrees(math.atan2(z.imag, z.real)))])


def load_spectrum(path, fmt=None, **kw):
    """Dispatch on ``fmt`` ("touchstone", "reim", "magdbphasedeg") or the file suffix."""
    path = Path(path)
    if fmt is None:
        fmt = "touchstone" if path.suffix.lower() in (".s2p", ".ts") else None
    if fmt == "touchstone":
        return load_touchstone(path, **kw)
    return load_csv(path, fmt, **kw)


# ----------------------------------------------------------------- manifest

@dataclass
class ManifestEntry:
    path: str
    power_dbm: float | None = None
    temperature_k: float | None = None
    label: str | None = None
    format: str | None = None


@dataclass
class Manifest:
    axis: Axis
    attenuation_db: float | None
    entries: list = field(default_factory=list)
    delay_s: float = 0.0


def read_manifest(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpectrumFormatError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    if not isinstance(doc, dict) or "spectra" not in doc or "axis" not in doc:
        raise SpectrumFormatError("manifest needs 'axis' and 'spectra' keys", path)
    entries = []
    for i, e in enumerate(doc["spectra"]):
        if "path" not in e:
            raise SpectrumFormatError(f"spectra[{i}] lacks 'path'", path)
        entries.append(ManifestEntry(path=e["path"], power_dbm=e.get("power_dbm"),
                                     temperature_k=e.get("temperature_k"),
                                     label=e.get("label"), format=e.get("format")))
    return Manifest(axis=Axis(doc["axis"]), attenuation_db=doc.get("attenuation_db"),
                    entries=entries, delay_s=float(doc.get("delay_s", 0.0)))


def write_manifest(path, manifest):
    doc = {
        "axis": manifest.axis.value,
        "attenuation_db": manifest.attenuation_db,
        "delay_s": manifest.delay_s,
        "spectra": [{k: v for k, v in vars(e).items() if v is not None} for e in manifest.entries],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_campaign(manifest_path, attenuation_db=None):
    """Load every spectrum listed in a manifest into a SweepCampaign.

    ``attenuation_db`` overrides the manifest value; one of the two is required.
    """
    manifest_path = Path(manifest_path)
    man = read_manifest(manifest_path)
    att = attenuation_db if attenuation_db is not None else man.attenuation_db
    if att is None:
        raise ValueError("input-line attenuation is unknown: set attenuation_db in the "
                         "manifest or pass it explicitly")
    base = manifest_path.parent
    spectra = []
    for e in man.entries:
        p = Path(e.path)
        if not p.is_absolute():
            p = base / p
        spectra.append(load_spectrum(p, e.format, delay_s=man.delay_s, power_dbm=e.power_dbm,
                                     temperature_k=e.temperature_k, label=e.label))
    return SweepCampaign(spectra, man.axis, float(att))
