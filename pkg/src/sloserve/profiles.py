"""Model performance profiles and catalogs.

Profiles are plain data files that stand in for compiled models: they carry
every number the scheduler and the emulated workers consume (weights size,
host-to-device transfer time, per-batch-size execution times, per-request IO
sizes and transfer times). Catalogs assign dense integer model ids and can
express N replicas of a base profile; requests to distinct replicas are never
batched together.

File grammar (UTF-8 text, '#' comments and blank lines ignored)::

    page_bytes <int>                  # optional header, default 16777216
    model <name>                      # starts a profile record
    weights_bytes <int>
    weights_transfer_ns <int>
    io_ns <input_ns> <output_ns>      # optional, default 50000 50000
    io_bytes <input_B> <output_B>     # optional, default 0 0
    batch <size> <exec_ns>            # one line per supported batch size
    replicas <name> <count>           # appends <count> copies of a profile

Model ids are assigned in file order: each `model` record takes the next id,
and each `replicas` directive appends <count> ids at its position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_PAGE_BYTES = 16 * 1024 * 1024
DEFAULT_IO_TRANSFER_NS = 50_000  # "orders of magnitude faster" than exec/load


class CatalogError(Exception):
    pass


class CatalogParseError(CatalogError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ProfileValidationError(CatalogError):
    def __init__(self, model_name: str, message: str):
        super().__init__(f"model {model_name!r}: {message}")
        self.model_name = model_name


@dataclass(frozen=True)
class ModelProfile:
    """Per-model timing truth: the worker emulates these durations and the
    controller seeds its estimators from them."""

    model_name: str
    weights_size: int                 # bytes
    weights_transfer: int             # ns, host->device copy for a Load
    batch_sizes: tuple[int, ...]
    exec_duration: dict[int, int]     # batch size -> ns
    input_size: int = 0               # bytes per request
    output_size: int = 0
    input_transfer: int = DEFAULT_IO_TRANSFER_NS   # ns per request
    output_transfer: int = DEFAULT_IO_TRANSFER_NS

    def validate(self) -> None:
        name = self.model_name
        if self.weights_size <= 0:
            raise ProfileValidationError(name, "weights_size must be > 0")
        if self.weights_transfer <= 0:
            raise ProfileValidationError(name, "weights_transfer must be > 0")
        if self.input_transfer <= 0 or self.output_transfer <= 0:
            raise ProfileValidationError(name, "io transfer durations must be > 0")
        if self.input_size < 0 or self.output_size < 0:
            raise ProfileValidationError(name, "io sizes must be >= 0")
        if not self.batch_sizes:
            raise ProfileValidationError(name, "no batch sizes")
        if any(b <= 0 for b in self.batch_sizes):
            raise ProfileValidationError(name, "batch sizes must be positive")
        if list(self.batch_sizes) != sorted(set(self.batch_sizes)):
            raise ProfileValidationError(name, "batch sizes must be strictly increasing")
        if set(self.exec_duration) != set(self.batch_sizes):
            raise ProfileValidationError(name, "exec_duration keys must equal batch_sizes")
        prev_b = None
        for b in self.batch_sizes:
            d = self.exec_duration[b]
            if d <= 0:
                raise ProfileValidationError(name, f"exec_duration({b}) must be > 0")
            if prev_b is not None:
                dp = self.exec_duration[prev_b]
                if d < dp:
                    raise ProfileValidationError(
                        name, f"exec_duration({b}) < exec_duration({prev_b}): not non-decreasing")
                # Batching must never cost more per request at a larger size.
                if d * prev_b > dp * b:
                    raise ProfileValidationError(
                        name,
                        f"exec_duration({b})/{b} > exec_duration({prev_b})/{prev_b}: "
                        "per-request efficiency not non-increasing")
            prev_b = b

    @property
    def min_batch(self) -> int:
        return self.batch_sizes[0]

    @property
    def max_batch(self) -> int:
        return self.batch_sizes[-1]

    def pages_needed(self, page_bytes: int) -> int:
        # Recomputed on demand, never stored (page size is a catalog property).
        return max(1, math.ceil(self.weights_size / page_bytes))


@dataclass(frozen=True)
class CatalogEntry:
    model_id: int
    profile: ModelProfile
    replica_of: str   # base profile name; equals profile.model_name

    @property
    def display_name(self) -> str:
        return f"{self.replica_of}#{self.model_id}"


@dataclass
class ModelCatalog:
    entries: list[CatalogEntry] = field(default_factory=list)
    page_size: int = DEFAULT_PAGE_BYTES

    def __len__(self) -> int:
        return len(self.entries)

    def profile(self, model_id: int) -> ModelProfile:
        return self.entries[model_id].profile

    def pages_needed(self, model_id: int) -> int:
        return self.entries[model_id].profile.pages_needed(self.page_size)

    def has_model(self, model_id: int) -> bool:
        return 0 <= model_id < len(self.entries)

    def model_ids(self) -> range:
        return range(len(self.entries))

    def base_profile(self, name: str) -> ModelProfile | None:
        for e in self.entries:
            if e.replica_of == name:
                return e.profile
        return None

    def _append(self, profile: ModelProfile, replica_of: str) -> CatalogEntry:
        entry = CatalogEntry(len(self.entries), profile, replica_of)
        self.entries.append(entry)
        return entry

    def validate(self) -> None:
        for i, e in enumerate(self.entries):
            if e.model_id != i:
                raise CatalogError(f"model ids not contiguous at index {i}")
            e.profile.validate()


def replicate_model(catalog: ModelCatalog, base: str, copies: int) -> ModelCatalog:
    """Append `copies` new model ids sharing `base`'s profile. Replicas are
    distinct models to the scheduler; their requests are never batched
    together."""
    if copies < 0:
        raise ValueError("copies must be >= 0")
    profile = catalog.base_profile(base)
    if profile is None:
        raise CatalogError(f"unknown base model {base!r}")
    for _ in range(copies):
        catalog._append(profile, base)
    return catalog


def seed_estimate(profile: ModelProfile, batch_size: int) -> int:
    """Profiled execution time, used to initialize controller estimators
    before any measurements exist."""
    try:
        return profile.exec_duration[batch_size]
    except KeyError:
        raise ProfileValidationError(
            profile.model_name, f"unsupported batch size {batch_size}") from None


# ---------------------------------------------------------------------------
# Parsing / serialization


def loads_catalog(text: str) -> ModelCatalog:
    catalog = ModelCatalog()
    profiles: dict[str, ModelProfile] = {}

    cur: dict | None = None
    cur_line = 0

    def finish_record():
        nonlocal cur
        if cur is None:
            return
        name = cur["name"]
        missing = [k for k in ("weights_bytes", "weights_transfer_ns") if k not in cur]
        if missing:
            raise CatalogParseError(cur_line, f"model {name!r} missing {missing[0]}")
        if not cur["batches"]:
            raise CatalogParseError(cur_line, f"model {name!r} has no batch lines")
        io_ns = cur.get("io_ns", (DEFAULT_IO_TRANSFER_NS, DEFAULT_IO_TRANSFER_NS))
        io_bytes = cur.get("io_bytes", (0, 0))
        batches = cur["batches"]
        profile = ModelProfile(
            model_name=name,
            weights_size=cur["weights_bytes"],
            weights_transfer=cur["weights_transfer_ns"],
            batch_sizes=tuple(b for b, _ in batches),
            exec_duration={b: d for b, d in batches},
            input_size=io_bytes[0],
            output_size=io_bytes[1],
            input_transfer=io_ns[0],
            output_transfer=io_ns[1],
        )
        profile.validate()
        if name in profiles:
            raise CatalogParseError(cur_line, f"duplicate model name {name!r}")
        profiles[name] = profile
        catalog._append(profile, name)
        cur = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        try:
            if key == "page_bytes":
                finish_record()
                catalog.page_size = int(args[0])
                if catalog.page_size <= 0:
                    raise CatalogParseError(lineno, "page_bytes must be > 0")
            elif key == "model":
                finish_record()
                cur = {"name": args[0], "batches": []}
                cur_line = lineno
            elif key == "replicas":
                finish_record()
                name, count = args[0], int(args[1])
                if name not in profiles:
                    raise CatalogParseError(lineno, f"replicas of unknown model {name!r}")
                if count < 0:
                    raise CatalogParseError(lineno, "replica count must be >= 0")
                for _ in range(count):
                    catalog._append(profiles[name], name)
            elif key in ("weights_bytes", "weights_transfer_ns"):
                if cur is None:
                    raise CatalogParseError(lineno, f"{key} outside a model record")
                cur[key] = int(args[0])
            elif key == "io_ns":
                if cur is None:
                    raise CatalogParseError(lineno, "io_ns outside a model record")
                cur["io_ns"] = (int(args[0]), int(args[1]))
            elif key == "io_bytes":
                if cur is None:
                    raise CatalogParseError(lineno, "io_bytes outside a model record")
                cur["io_bytes"] = (int(args[0]), int(args[1]))
            elif key == "batch":
                if cur is None:
                    raise CatalogParseError(lineno, "batch outside a model record")
                cur["batches"].append((int(args[0]), int(args[1])))
            else:
                raise CatalogParseError(lineno, f"unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            raise CatalogParseError(lineno, f"malformed {key!r} line: {exc}") from None
    finish_record()
    catalog.validate()
    return catalog


def load_catalog(path: str) -> ModelCatalog:
    with open(path, "r", encoding="utf-8") as f:
        return loads_catalog(f.read())


def dumps_catalog(catalog: ModelCatalog) -> str:
    """Canonical text form: page_bytes header, profile records at first use
    (in id order), runs of replicas coalesced into `replicas` directives.
    Loading the output reproduces the exact id assignment."""
    out = [f"page_bytes {catalog.page_size}"]
    seen: set[str] = set()
    i = 0
    entries = catalog.entries
    while i < len(entries):
        e = entries[i]
        name = e.replica_of
        if name not in seen:
            seen.add(name)
            p = e.profile
            out.append(f"model {name}")
            out.append(f"weights_bytes {p.weights_size}")
            out.append(f"weights_transfer_ns {p.weights_transfer}")
            out.append(f"io_ns {p.input_transfer} {p.output_transfer}")
            out.append(f"io_bytes {p.input_size} {p.output_size}")
            for b in p.batch_sizes:
                out.append(f"batch {b} {p.exec_duration[b]}")
            i += 1
            continue
        j = i
        while j < len(entries) and entries[j].replica_of == name:
            j += 1
        out.append(f"replicas {name} {j - i}")
        i = j
    return "\n".join(out) + "\n"


def save_catalog(catalog: ModelCatalog, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_catalog(catalog))


# Measured reference profiles shipped in-repo (sizes in decimal MB -> bytes,
# kB -> bytes; durations in ms -> ns). densenet169, inceptionv3, resnet18/50/152.
REFERENCE_CATALOG = """\
page_bytes 16777216
model densenet169
weights_bytes 56500000
weights_transfer_ns 4500000
io_ns 50000 50000
io_bytes 602000 4000
batch 1 5180000
batch 2 6290000
batch 4 8570000
batch 8 12820000
batch 16 21850000
model inceptionv3
weights_bytes 95300000
weights_transfer_ns 7770000
io_ns 50000 50000
io_bytes 1073000 4000
batch 1 4460000
batch 2 6850000
batch 4 10990000
batch 8 16450000
batch 16 26170000
model resnet18
weights_bytes 46700000
weights_transfer_ns 3810000
io_ns 50000 50000
io_bytes 602000 4000
batch 1 1270000
batch 2 1860000
batch 4 2730000
batch 8 4060000
batch 16 7020000
model resnet50
weights_bytes 102300000
weights_transfer_ns 8330000
io_ns 50000 50000
io_bytes 602000 4000
batch 1 2610000
batch 2 3780000
batch 4 5610000
batch 8 9130000
batch 16 15670000
model resnet152
weights_bytes 240900000
weights_transfer_ns 19580000
io_ns 50000 50000
io_bytes 602000 4000
batch 1 7710000
batch 2 11140000
batch 4 16210000
batch 8 26480000
batch 16 44600000
"""


def reference_catalog() -> ModelCatalog:
    return loads_catalog(REFERENCE_CATALOG)
