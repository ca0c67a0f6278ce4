# cropsim/dataset/models/treatment.py
from dataclasses import dataclass

COMPOSITIONS = ("mix", "sw", "fb")
DENSITIES = ("L", "H")


@dataclass(frozen=True)
class Treatment:
    id: int
    name: str
    composition: str  # mix | sw | fb
    density: str  # L | H

    @property
    def is_mixture(self) -> bool:
        return self.composition == "mix"

    def species(self) -> tuple[str, ...]:
        return ("sw", "fb") if self.is_mixture else (self.composition,)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "composition": self.composition,
            "density": self.density,
        }

    @classmethod
    def from_row(cls, row: dict) -> "Treatment":
        composition = row["composition"]
        density = row["density"]
        if composition not in COMPOSITIONS:
            raise ValueError(f"unknown composition {composition!r}")
        if density not in DENSITIES:
            raise ValueError(f"unknown density {density!r}")
        return cls(id=int(row["id"]), name=str(row["name"]), composition=composition, density=density)


def default_vocabulary(n_treatments: int) -> list[Treatment]:
    """Composition x density grid: density alternates fastest, then mix/sw/fb."""
    vocab = []
    for i in range(n_treatments):
        density = DENSITIES[i % 2]
        composition = COMPOSITIONS[(i // 2) % 3]
        name = f"{composition}-{density}"
        if i >= 6:
            name = f"{name}-{i // 6}"
        vocab.append(Treatment(id=i, name=name, composition=composition, density=density))
    return vocab


def find_changed(vocab: list[Treatment], source: Treatment, change: str) -> Treatment | None:
    """
    Resolve a treatment change through the vocabulary.
    density: L -> H with the same composition; composition: mixture -> first monoculture.
    """
    for cand in vocab:
        if cand.id == source.id:
            continue
        if change == "density":
            if (
                source.density == "L"
                and cand.density == "H"
                and cand.composition == source.composition
            ):
                return cand
        elif change == "composition":
            if source.is_mixture and not cand.is_mixture and cand.density == source.density:
                return cand
        else:
            raise ValueError(f"unknown treatment change {change!r}")
    return None
