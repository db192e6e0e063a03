"""Synthetic fine-grained classification data with close-set and open-set
label noise, plus hypergeometric analysis of per-batch noise counts."""
import csv
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from softdrop.errors import ConfigError, ContractViolation

CLEAN, CLOSE, OPEN = 0, 1, 2
PROVENANCE_NAMES = ("clean", "close", "open")
HIST_BINS = 24
_MAX_TRIES = 100_000


@dataclass(frozen=True)
class DatasetSpec:
    n_classes: int = 20
    d_in: int = 16
    per_class: int = 100
    val_per_class: int = 20
    test_per_class: int = 30
    close_rate: float = 0.0
    open_rate: float = 0.0
    center_radius: float = 3.0
    within_std: float = 0.3
    pair_angle_deg: float = 15.0
    min_center_sep_deg: float = 60.0
    open_margin_deg: float = 45.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if self.d_in < 2:
            raise ConfigError("d_in must be >= 2")
        for name in ("close_rate", "open_rate"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.close_rate + self.open_rate >= 1.0:
            raise ConfigError("noise rates must sum to less than 1")
        if self.per_class < 1 or self.val_per_class < 0 or self.test_per_class < 0:
            raise ConfigError("sample counts must be positive")
        if self.center_radius <= 0 or self.within_std < 0:
            raise ConfigError("center_radius must be > 0 and within_std >= 0")

    @classmethod
    def from_dict(cls, obj):
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self):
        return asdict(self)


@dataclass
class Dataset:
    X: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray
    true_labels: np.ndarray
    sample_ids: np.ndarray

    def __len__(self):
        return self.labels.size

    @property
    def noisy(self):
        return self.provenance != CLEAN

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.labels[idx], self.provenance[idx],
                       self.true_labels[idx], self.sample_ids[idx])

    def counts(self):
        return {name: int(np.sum(self.provenance == code))
                for code, name in enumerate(PROVENANCE_NAMES)}


@dataclass
class DatasetBundle:
    train: Dataset
    val: Dataset | None
    test: Dataset
    spec: DatasetSpec | None = None


def _unit(v):
    return v / np.linalg.norm(v)


def _class_centers(spec, rng):
    """Unit centers generated in confusable pairs at ``pair_angle_deg``."""
    cos_sep = math.cos(math.radians(spec.min_center_sep_deg))
    theta = math.radians(spec.pair_angle_deg)
    centers = []
    tries = 0
    while len(centers) < spec.n_classes:
        tries += 1
        if tries > _MAX_TRIES:
            raise ConfigError(
                f"cannot place {spec.n_classes} class centers in {spec.d_in} "
                f"dimensions with {spec.min_center_sep_deg} deg separation")
        a = _unit(rng.standard_normal(spec.d_in))
        group = [a]
        if len(centers) + 1 < spec.n_classes:
            v = rng.standard_normal(spec.d_in)
            v = _unit(v - np.dot(v, a) * a)
            group.append(math.cos(theta) * a + math.sin(theta) * v)
        if all(np.dot(g, c) < cos_sep for g in group for c in centers):
            centers.extend(group)
    return np.array(centers)


def partner_class(j, n_classes):
    """Confusable partner of class ``j`` (itself for an unpaired last class)."""
    p = j ^ 1
    return p if p < n_classes else j


def _open_directions(spec, centers, n, rng):
    cos_margin = math.cos(math.radians(spec.open_margin_deg))
    out = np.empty((n, spec.d_in))
    for i in range(n):
        for _ in range(_MAX_TRIES):
            u = _unit(rng.standard_normal(spec.d_in))
            if np.max(centers @ u) < cos_margin:
                break
        else:
            raise ConfigError("no direction clears the open-set margin")
        out[i] = u
    return out


def _draw(spec, directions, rng):
    noise = spec.within_std * rng.standard_normal(directions.shape)
    return spec.center_radius * directions + noise


def _clean_split(spec, centers, per_class, rng):
    y = np.repeat(np.arange(spec.n_classes), per_class)
    X = _draw(spec, centers[y], rng)
    n = y.size
    return Dataset(X, y, np.zeros(n, dtype=np.int64), y.copy(),
                   np.arange(n, dtype=np.int64))


def generate(spec):
    """Train / clean validation / clean test splits; deterministic per seed.

    Noise counts are exact: ``round(rate * N)`` training samples of each kind.
    Open-set samples keep their slot's label but get features pointing away
    from every class center; close-set samples are relabeled to the
    confusable partner class.
    """
    rng = np.random.default_rng(spec.seed)
    centers = _class_centers(spec, rng)
    train = _clean_split(spec, centers, spec.per_class, rng)
    n = len(train)
    n_open = int(round(spec.open_rate * n))
    n_close = int(round(spec.close_rate * n))
    perm = rng.permutation(n)
    open_idx = np.sort(perm[:n_open])
    close_idx = np.sort(perm[n_open:n_open + n_close])

    train.X[open_idx] = _draw(spec, _open_directions(spec, centers, n_open, rng), rng)
    train.provenance[open_idx] = OPEN
    train.true_labels[open_idx] = -1

    for i in close_idx:
        y = train.labels[i]
        p = partner_class(y, spec.n_classes)
        if p == y:  # unpaired last class: flip to a random other class
            p = (y + 1 + rng.integers(spec.n_classes - 1)) % spec.n_classes
        train.labels[i] = p
        train.provenance[i] = CLOSE

    order = rng.permutation(n)
    train = train.subset(order)
    train.sample_ids = np.arange(n, dtype=np.int64)

    val = _clean_split(spec, centers, spec.val_per_class, rng)
    test = _clean_split(spec, centers, spec.test_per_class, rng)
    return DatasetBundle(train, val if len(val) else None, test, spec)


def save_dataset(ds, path):
    d = ds.X.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "label", "provenance", "true_label"]
                   + [f"f{k}" for k in range(d)])
        for i in range(len(ds)):
            w.writerow([int(ds.sample_ids[i]), int(ds.labels[i]),
                        PROVENANCE_NAMES[ds.provenance[i]], int(ds.true_labels[i])]
                       + [repr(float(v)) for v in ds.X[i]])


def load_dataset(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:4] != ["sample_id", "label", "provenance", "true_label"]:
        raise ContractViolation(f"{path}: unexpected header {header[:4]}")
    code = {name: i for i, name in enumerate(PROVENANCE_NAMES)}
    try:
        ids = np.array([int(r[0]) for r in body], dtype=np.int64)
        labels = np.array([int(r[1]) for r in body], dtype=np.int64)
        prov = np.array([code[r[2]] for r in body], dtype=np.int64)
        true = np.array([int(r[3]) for r in body], dtype=np.int64)
        X = np.array([[float(v) for v in r[4:]] for r in body], dtype=np.float64)
    except (KeyError, ValueError, IndexError) as exc:
        raise ContractViolation(f"{path}: malformed row ({exc})") from exc
    X = X.reshape(len(body), len(header) - 4)
    return Dataset(X, labels, prov, true, ids)


def save_bundle(bundle, out_dir):
    """Write ``train.csv``, ``val.csv``, ``test.csv`` and ``dataset.json``."""
    paths = {}
    for name in ("train", "val", "test"):
        ds = getattr(bundle, name)
        if ds is None:
            continue
        p = out_dir / f"{name}.csv"
        save_dataset(ds, p)
        paths[name] = p
    p = out_dir / "dataset.json"
    with open(p, "w") as fh:
        json.dump(bundle.spec.to_dict() if bundle.spec else {}, fh, indent=2,
                  sort_keys=True)
        fh.write("\n")
    paths["spec"] = p
    return paths


def load_bundle(data_dir):
    val = data_dir / "val.csv"
    spec = None
    if (data_dir / "dataset.json").exists():
        with open(data_dir / "dataset.json") as fh:
            obj = json.load(fh)
        spec = DatasetSpec.from_dict(obj) if obj else None
    return DatasetBundle(load_dataset(data_dir / "train.csv"),
                         load_dataset(val) if val.exists() else None,
                         load_dataset(data_dir / "test.csv"), spec)


# --- hypergeometric batch-noise analysis ---------------------------------

def hypergeometric_pmf(N, K, n, k):
    """P(k noisy samples in a batch of n drawn from N containing K noisy)."""
    if not (0 <= K <= N and 0 <= n <= N):
        raise ContractViolation("need 0 <= K <= N and 0 <= n <= N")
    if k < max(0, n - (N - K)) or k > min(n, K):
        return 0.0

    def lchoose(a, b):
        return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)

    return math.exp(lchoose(K, k) + lchoose(N - K, n - k) - lchoose(N, n))


def hypergeometric_moments(N, K, n):
    p = K / N
    var = n * p * (1 - p) * (N - n) / (N - 1) if N > 1 else 0.0
    return n * p, var


@dataclass
class NoiseRateStats:
    dataset_size: int
    noise_rate: float
    batch_size: int
    counts: np.ndarray

    @property
    def rates(self):
        return self.counts / self.batch_size

    @property
    def mean(self):
        return float(np.mean(self.counts))

    @property
    def variance(self):
        return float(np.var(self.counts))

    def histogram(self, bins=HIST_BINS):
        hist, edges = np.histogram(self.rates, bins=bins, range=(0.0, 1.0))
        return hist, edges


def random_partition(n, batch_size, rng):
    perm = rng.permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def batch_noise_stats(noisy, batches):
    """Noise counts per batch; ``noisy`` is a boolean mask or a Dataset.

    ``batch_size`` is the nominal (largest) batch size of the partition.
    """
    if isinstance(noisy, Dataset):
        noisy = noisy.noisy
    noisy = np.asarray(noisy, dtype=bool)
    counts = np.array([int(np.sum(noisy[np.asarray(b, dtype=np.int64)]))
                       for b in batches], dtype=np.int64)
    size = max((len(b) for b in batches), default=0)
    return NoiseRateStats(noisy.size, float(noisy.mean()) if noisy.size else 0.0,
                          size, counts)


def shuffled_batch_counts(n, n_noisy, batch_size, n_shuffles, seed=0):
    """Per-batch noise counts over repeated uniform shuffles (full batches only)."""
    rng = np.random.default_rng(seed)
    noisy = np.zeros(n, dtype=bool)
    noisy[:n_noisy] = True
    n_full = n // batch_size
    out = np.empty((n_shuffles, n_full), dtype=np.int64)
    for s in range(n_shuffles):
        perm = rng.permutation(noisy)[: n_full * batch_size]
        out[s] = perm.reshape(n_full, batch_size).sum(axis=1)
    return out.ravel()
