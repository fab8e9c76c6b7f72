"""
Orchestration behind the table1 and fig1 commands: build the manifests,
dispatch the trainings, and turn the reports into CSV text.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

from experiments.manifest import FULL, ExperimentManifest, Scale, preset
from experiments.reference import (
    BASELINE_PLATEAU_BAND,
    CISFORMER_EA_FLOOR,
    CISFORMER_EA_HEADLINE,
    TABLE1,
    TABLE1_TOLERANCE,
)
from networks.spec import Arch, AttentionKind
from streams.config import ABLATION_SUBSETS
from training.report import Plateau, TrainReport
from training.tasks import dispatch_runs

logger = logging.getLogger(__name__)

QUICK_WATERMARK = "QUICK PRESET: reduced layers and epochs, not comparable to the reference values"
FIG1_MODELS = {
    "lstm": (Arch.LSTM, None),
    "mlp": (Arch.MLP, None),
    "cis_dpa": (Arch.CISFORMER, AttentionKind.DPA),
    "cis_ea": (Arch.CISFORMER, AttentionKind.EA),
}
HEADLINE_MODEL = "cis_ea"
CURVE_SUBSET = "IARC"


def run_manifests(manifests: list[ExperimentManifest]) -> list[TrainReport]:
    return dispatch_runs([m.to_run(checkpoints=False) for m in manifests])


def _run_root(output_root) -> Path | None:
    return Path(output_root) / "runs" if output_root else None


@dataclass
class Table1Result:
    measured: dict[AttentionKind, dict[str, float]]
    quick: bool = False
    subsets: tuple[str, ...] = ABLATION_SUBSETS

    def rows(self) -> list[tuple[str, str, float, float, float]]:
        rows = []
        for kind, by_subset in self.measured.items():
            for subset in self.subsets:
                reference = TABLE1[kind][subset]
                rows.append((kind.value, subset, by_subset[subset], reference, by_subset[subset] - reference))
        return rows

    def ea_gap(self) -> dict[str, float]:
        return {s: self.measured[AttentionKind.EA][s] - self.measured[AttentionKind.DPA][s] for s in self.subsets}

    def out_of_band(self, tolerance: float = TABLE1_TOLERANCE) -> list[tuple[str, str, float, float, float]]:
        """Rows whose measured accuracy is further than `tolerance` from the reference."""
        return [row for row in self.rows() if abs(row[4]) > tolerance]

    def to_csv(self) -> str:
        lines = ["attention,subset,measured,reference,delta"]
        lines += [f"{k},{s},{m:.6f},{r:.2f},{d:+.6f}" for k, s, m, r, d in self.rows()]
        return "\n".join(lines) + "\n"

    def render(self) -> str:
        header = f"{'':<5}" + "".join(f"{s:>24}" for s in self.subsets)
        lines = [header]
        for kind, by_subset in self.measured.items():
            cells = []
            for subset in self.subsets:
                value, reference = by_subset[subset], TABLE1[kind][subset]
                cells.append(f"{value:.2f} (ref {reference:.2f}, {value - reference:+.2f})".rjust(24))
            lines.append(f"{kind.value.upper():<5}" + "".join(cells))
        if self.quick:
            lines += ["", QUICK_WATERMARK]
        return "\n".join(lines) + "\n"


def table1_manifests(scale: Scale = FULL, seed: int = 0, output_root=None) -> list[ExperimentManifest]:
    return [
        preset(Arch.TRANSFORMER, kind, subset, scale=scale, seed=seed, output_root=_run_root(output_root))
        for kind in (AttentionKind.DPA, AttentionKind.EA)
        for subset in ABLATION_SUBSETS
    ]


def run_table1(scale: Scale = FULL, seed: int = 0, output_root=None) -> Table1Result:
    manifests = table1_manifests(scale, seed, output_root)
    reports = run_manifests(manifests)
    measured: dict[AttentionKind, dict[str, float]] = {}
    for manifest, report in zip(manifests, reports):
        measured.setdefault(manifest.spec.attention, {})[manifest.task.tasks] = report.final.accuracy
    return Table1Result(measured, quick=scale != FULL)


@dataclass
class Fig1Result:
    curves: dict[str, TrainReport]
    ablation: dict[str, dict[str, float]]
    quick: bool = False
    subsets: tuple[str, ...] = ABLATION_SUBSETS
    plateaus: dict[str, Plateau] = field(init=False)

    def __post_init__(self):
        self.plateaus = {name: report.plateau() for name, report in self.curves.items()}

    @property
    def finals(self) -> dict[str, float]:
        return {name: report.final.accuracy for name, report in self.curves.items()}

    def left_csv(self) -> str:
        names = list(self.curves)
        epochs = next(iter(self.curves.values())).epochs
        lines = ["epoch," + ",".join(names)]
        for row, epoch in enumerate(epochs):
            lines.append(f"{epoch}," + ",".join(f"{self.curves[n].points[row].accuracy:.6f}" for n in names))
        return "\n".join(lines) + "\n"

    def right_csv(self) -> str:
        names = list(self.ablation)
        lines = ["subset," + ",".join(names)]
        lines += [f"{s}," + ",".join(f"{self.ablation[n][s]:.6f}" for n in names) for s in self.subsets]
        return "\n".join(lines) + "\n"

    def plateau_csv(self) -> str:
        lines = ["model,mean,std,points"]
        lines += [f"{n},{p.mean:.6f},{p.std:.6f},{p.n_points}" for n, p in self.plateaus.items()]
        return "\n".join(lines) + "\n"

    def ordering_violations(self) -> list[str]:
        """Models whose final IARC accuracy beats the cisformer with expressive attention."""
        finals = self.finals
        return [n for n, value in finals.items() if n != HEADLINE_MODEL and value > finals[HEADLINE_MODEL]]

    def band_violations(self) -> list[str]:
        """
        Expected levels that were missed: the headline model must end at or
        above CISFORMER_EA_FLOOR, every other model must plateau strictly
        inside BASELINE_PLATEAU_BAND.
        """
        low, high = BASELINE_PLATEAU_BAND
        violations = []
        headline = self.finals[HEADLINE_MODEL]
        if headline < CISFORMER_EA_FLOOR:
            violations.append(
                f"{HEADLINE_MODEL} final {headline:.4f} below {CISFORMER_EA_FLOOR:.2f} "
                f"(reference about {CISFORMER_EA_HEADLINE:.2f})"
            )
        for name, plateau in self.plateaus.items():
            if name != HEADLINE_MODEL and not low < plateau.mean < high:
                violations.append(f"{name} plateau {plateau.mean:.4f} outside ({low:.2f}, {high:.2f})")
        return violations


def fig1_manifests(scale: Scale = FULL, seed: int = 0, output_root=None) -> dict[tuple[str, str], ExperimentManifest]:
    return {
        (name, subset): preset(arch, attention, subset, scale=scale, seed=seed, output_root=_run_root(output_root))
        for name, (arch, attention) in FIG1_MODELS.items()
        for subset in ABLATION_SUBSETS
    }


def run_fig1(scale: Scale = FULL, seed: int = 0, output_root=None) -> Fig1Result:
    manifests = fig1_manifests(scale, seed, output_root)
    keys = list(manifests)
    reports = dict(zip(keys, run_manifests([manifests[k] for k in keys])))
    curves = {name: reports[(name, CURVE_SUBSET)] for name in FIG1_MODELS}
    ablation = {name: {s: reports[(name, s)].final.accuracy for s in ABLATION_SUBSETS} for name in FIG1_MODELS}
    result = Fig1Result(curves, ablation, quick=scale != FULL)
    logger.info(f"Final IARC accuracies: {result.finals}")
    return result
