"""Synthetic PET/CT lesion phantoms, case manifests, and model-wise validation splits."""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import CapacityError, DataError, ParameterError, PlacementError
from .validation import check_triple
from .volume import DEFAULT_SPACING_MM, Volume3D, atomic_write_bytes, load_volume, save_volume

MAX_PLACEMENT_TRIES = 1000
CT_TEXTURE_SIGMA = 2.0


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple = (64, 64, 64)
    n_lesions: int = 2
    lesion_radius_range: tuple = (4, 7)
    pet_lesion_intensity: float = 10.0
    pet_background: float = 1.0
    ct_contrast: float = 1.0
    noise_sigma: float = 0.5
    seed: int = 0
    spacing_mm: tuple = DEFAULT_SPACING_MM

    def __post_init__(self):
        shape = check_triple(self.shape, "shape")
        object.__setattr__(self, "shape", shape)
        rmin, rmax = (int(r) for r in self.lesion_radius_range)
        object.__setattr__(self, "lesion_radius_range", (rmin, rmax))
        if self.n_lesions < 0:
            raise ParameterError("n_lesions must be non-negative")
        if not 0 <= rmin <= rmax or 2 * rmax + 1 > min(shape):
            raise ParameterError(f"lesion radius range {self.lesion_radius_range} does not fit in {shape}")
        values = (self.pet_lesion_intensity, self.pet_background, self.ct_contrast, self.noise_sigma)
        if not all(np.isfinite(v) for v in values) or self.noise_sigma < 0:
            raise ParameterError("phantom intensities must be finite and noise_sigma >= 0")


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    has_lesion: bool
    ct_path: str = None
    pet_path: str = None
    mask_path: str = None


def ball_offsets(radius):
    """Integer offsets (dz, dy, dx) with dz^2 + dy^2 + dx^2 <= radius^2."""
    r = np.arange(-radius, radius + 1)
    zz, yy, xx = np.meshgrid(r, r, r, indexing="ij")
    keep = zz**2 + yy**2 + xx**2 <= radius**2
    return np.stack([zz[keep], yy[keep], xx[keep]], axis=1)


def _place_lesions(spec, rng):
    placed = []
    lo, hi = spec.lesion_radius_range
    for _ in range(spec.n_lesions):
        radius = int(rng.integers(lo, hi + 1))
        for _ in range(MAX_PLACEMENT_TRIES):
            center = np.array([rng.integers(radius, d - radius) for d in spec.shape])
            # the +1 gap keeps lesions from touching, so each one is its own component
            if all(np.linalg.norm(center - c) > radius + r + 1 for c, r in placed):
                placed.append((center, radius))
                break
        else:
            raise PlacementError(
                f"could not place lesion {len(placed) + 1} of {spec.n_lesions} without overlap"
            )
    return placed


def generate_phantom(spec):
    """Return ``(ct, pet, mask)`` volumes for ``spec``; deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    mask = np.zeros(spec.shape, dtype=bool)
    for center, radius in _place_lesions(spec, rng):
        idx = ball_offsets(radius) + center
        mask[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    lesion = mask.astype(np.float64)
    pet = spec.pet_background + spec.pet_lesion_intensity * lesion
    pet = pet + rng.normal(0.0, spec.noise_sigma, spec.shape)
    texture = ndimage.gaussian_filter(rng.normal(0.0, 1.0, spec.shape), CT_TEXTURE_SIGMA)
    texture /= max(texture.std(), 1e-12)
    ct = texture + spec.ct_contrast * lesion + rng.normal(0.0, spec.noise_sigma, spec.shape)
    return (
        Volume3D(ct, spec.spacing_mm, "image"),
        Volume3D(pet, spec.spacing_mm, "image"),
        Volume3D(mask, spec.spacing_mm, "mask"),
    )


def likelihood_ratio_classifier(pet, spec):
    """Voxelwise PET likelihood-ratio rule for the phantom's two Gaussian classes.

    With equal variances the ratio exceeds one exactly past the midpoint of
    the background and lesion means.
    """
    cut = spec.pet_background + spec.pet_lesion_intensity / 2.0
    if spec.pet_lesion_intensity >= 0:
        out = pet.data > cut
    else:
        out = pet.data < cut
    return pet.with_data(out, "mask")


def split_model_wise(cases, k_sets, n_lesion, n_normal, seed=0):
    """Draw ``k_sets`` disjoint validation sets of fixed lesion/normal composition.

    Returns ``(val_sets, train_pool)``; the pool keeps manifest order and
    excludes every validation case.
    """
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise DataError("case ids must be unique")
    if k_sets < 1 or n_lesion < 0 or n_normal < 0:
        raise ParameterError("k_sets must be >= 1 and set sizes non-negative")
    lesion = [c.case_id for c in cases if c.has_lesion]
    normal = [c.case_id for c in cases if not c.has_lesion]
    if k_sets * n_lesion > len(lesion) or k_sets * n_normal > len(normal):
        raise CapacityError(
            f"{k_sets} sets need {k_sets * n_lesion} lesion and {k_sets * n_normal} normal cases, "
            f"have {len(lesion)} and {len(normal)}"
        )
    rng = np.random.default_rng(seed)
    lesion = [lesion[i] for i in rng.permutation(len(lesion))]
    normal = [normal[i] for i in rng.permutation(len(normal))]
    val_sets = []
    for k in range(k_sets):
        val_sets.append(
            lesion[k * n_lesion : (k + 1) * n_lesion] + normal[k * n_normal : (k + 1) * n_normal]
        )
    held = {i for s in val_sets for i in s}
    return val_sets, [i for i in ids if i not in held]


def write_manifest(path, records):
    lines = [json.dumps(asdict(r)) for r in records]
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path):
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = CaseRecord(
                    str(obj["case_id"]),
                    bool(obj["has_lesion"]),
                    *(_resolve(base, obj.get(k)) for k in ("ct_path", "pet_path", "mask_path")),
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest line: {exc}") from exc
            records.append(rec)
    return records


def _resolve(base, p):
    if p is None or os.path.isabs(p):
        return p
    return os.path.join(base, p)


def load_case(record):
    """Load ``(ct, pet, mask)`` volumes for a manifest record."""
    if record.ct_path is None or record.pet_path is None or record.mask_path is None:
        raise DataError(f"case {record.case_id} lacks volume paths")
    return load_volume(record.ct_path), load_volume(record.pet_path), load_volume(record.mask_path)


def synthesize_dataset(out_dir, n_cases, base_spec, normal_frac=0.5, seed=0, prefix="case"):
    """Write ``n_cases`` phantoms plus ``manifest.jsonl`` into ``out_dir``.

    The first ``round(n_cases * normal_frac)`` cases are lesion-free.
    """
    os.makedirs(out_dir, exist_ok=True)
    n_normal = int(round(n_cases * normal_frac))
    seeds = np.random.default_rng(seed).integers(0, 2**31 - 1, size=n_cases)
    records = []
    for i in range(n_cases):
        has_lesion = i >= n_normal
        spec = PhantomSpec(
            shape=base_spec.shape,
            n_lesions=base_spec.n_lesions if has_lesion else 0,
            lesion_radius_range=base_spec.lesion_radius_range,
            pet_lesion_intensity=base_spec.pet_lesion_intensity,
            pet_background=base_spec.pet_background,
            ct_contrast=base_spec.ct_contrast,
            noise_sigma=base_spec.noise_sigma,
            seed=int(seeds[i]),
            spacing_mm=base_spec.spacing_mm,
        )
        ct, pet, mask = generate_phantom(spec)
        case_id = f"{prefix}{i:04d}"
        paths = []
        for name, vol in (("ct", ct), ("pet", pet), ("mask", mask)):
            fname = f"{case_id}_{name}.fpvol"
            save_volume(vol, os.path.join(out_dir, fname))
            paths.append(fname)
        records.append(CaseRecord(case_id, has_lesion and spec.n_lesions > 0, *paths))
    write_manifest(os.path.join(out_dir, "manifest.jsonl"), records)
    return records
