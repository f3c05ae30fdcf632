"""Single-qubit gate-level benchmarking simulator.

Channels are Pauli transfer matrices (PTMs) in the normalized Pauli basis
``{I, X, Y, Z} / sqrt(2)``; composition is matrix multiplication and states
and effects are real 4-vectors with ``Tr[E rho] = effect @ rho``.

Sequence length convention: a length-``m`` sequence holds ``m`` uniformly
random Cliffords followed by one closing gate that inverts their ideal
composition. Interleaved sequences insert the target gate after each random
Clifford; the target gate does not count toward ``m``.
"""

from __future__ import annotations

import functools
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConstructionError, DomainError
from .model import Datum, ExperimentDesign, ModelParams, fidelity_from_p, survival_probabilities

log = logging.getLogger(__name__)

D = 2
GROUP_ORDER = 24
CLAMP_LOG_THRESHOLD = 1e-9

PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

TARGET_UNITARIES = {
    "I": PAULIS[0],
    "X": PAULIS[1],
    "Y": PAULIS[2],
    "Z": PAULIS[3],
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "P": np.diag([1, 1j]),
}

MAXIMALLY_MIXED = np.array([1.0, 0.0, 0.0, 0.0]) / np.sqrt(2)


def ptm_from_unitary(U: np.ndarray) -> np.ndarray:
    U = np.asarray(U, dtype=complex)
    R = np.empty((4, 4))
    for i, Pi in enumerate(PAULIS):
        for j, Pj in enumerate(PAULIS):
            R[i, j] = np.real(np.trace(Pi @ U @ Pj @ U.conj().T)) / 2
    return R


def depolarizing_ptm(strength: float) -> np.ndarray:
    """Unital block scaled by ``1 - strength``."""
    return np.diag([1.0] + [1.0 - strength] * 3)


def z_rotation_ptm(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    R = np.eye(4)
    R[1:3, 1:3] = [[c, -s], [s, c]]
    return R


def choi_from_ptm(R: np.ndarray) -> np.ndarray:
    J = np.zeros((4, 4), dtype=complex)
    for i, Pi in enumerate(PAULIS):
        for j, Pj in enumerate(PAULIS):
            J += R[i, j] / 2 * np.kron(Pj.T, Pi)
    return J


def is_trace_preserving(R: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.allclose(R[0], [1.0, 0.0, 0.0, 0.0], atol=tol, rtol=0))


def is_completely_positive(R: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.linalg.eigvalsh(choi_from_ptm(R)).min() >= -tol)


def unital_p(R: np.ndarray) -> float:
    """Depolarizing parameter of the twirl of ``R``: mean of the unital-block diagonal."""
    return float(np.trace(R[1:, 1:]) / 3.0)


@dataclass(frozen=True)
class CliffordGroup:
    ptms: np.ndarray  # (24, 4, 4)
    labels: tuple[str, ...]
    mult: np.ndarray  # mult[i, j] = index of ptms[i] @ ptms[j] (j applied first)
    inverse: np.ndarray
    identity: int = 0

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise DomainError(f"unknown gate label {label!r}") from None

    def __len__(self) -> int:
        return len(self.labels)


def _find(ptms: list[np.ndarray], R: np.ndarray) -> int:
    for k, S in enumerate(ptms):
        if np.allclose(S, R, atol=1e-9):
            return k
    return -1


@functools.lru_cache(maxsize=None)
def clifford_group() -> CliffordGroup:
    """The 24 single-qubit Cliffords, generated by H and P.

    Elements equal to one of the named target gates carry that name; the rest
    are labeled by a generating word read in time order (``"HP"`` = H then P).
    """
    gens = {"H": ptm_from_unitary(TARGET_UNITARIES["H"]), "P": ptm_from_unitary(TARGET_UNITARIES["P"])}
    ptms = [np.eye(4)]
    words = [""]
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for name, G in gens.items():
            R = np.rint(G @ ptms[k])
            if _find(ptms, R) < 0:
                ptms.append(R)
                words.append(words[k] + name)
                queue.append(len(ptms) - 1)
    if len(ptms) != GROUP_ORDER:
        raise ConstructionError(f"generated {len(ptms)} elements, expected {GROUP_ORDER}")

    labels = list(words)
    labels[0] = "I"
    for name, U in TARGET_UNITARIES.items():
        labels[_find(ptms, ptm_from_unitary(U))] = name

    stack = np.array(ptms)
    mult = np.empty((GROUP_ORDER, GROUP_ORDER), dtype=np.intp)
    for i in range(GROUP_ORDER):
        for j in range(GROUP_ORDER):
            mult[i, j] = _find(ptms, stack[i] @ stack[j])
    inverse = np.array([int(np.flatnonzero(mult[i] == 0)[0]) for i in range(GROUP_ORDER)])
    stack.setflags(write=False)
    mult.setflags(write=False)
    inverse.setflags(write=False)
    return CliffordGroup(ptms=stack, labels=tuple(labels), mult=mult, inverse=inverse)


@dataclass
class GateNoise:
    depolarizing_strength: float = 0.0
    overrotation_angle: float = 0.0


@dataclass
class NoiseConfig:
    """Parametric gate noise and SPAM.

    Every gate gets ``depolarizing(strength) o z_rotation(angle)``; entries in
    ``per_gate`` replace those values for the named label. SPAM is a prepared
    state with Bloch z-component ``prep_polarization`` and the effect
    ``meas_offset * I + meas_contrast * Z`` (ideal: 1, 0.5, 0.5).
    """

    depolarizing_strength: float = 0.0
    overrotation_angle: float = 0.0
    per_gate: dict = field(default_factory=dict)
    prep_polarization: float = 1.0
    meas_offset: float = 0.5
    meas_contrast: float = 0.5
    noise_before_gate: bool = False

    def gate_noise(self, label: str) -> GateNoise:
        over = self.per_gate.get(label, {})
        if isinstance(over, GateNoise):
            return over
        return GateNoise(
            depolarizing_strength=over.get("depolarizing_strength", self.depolarizing_strength),
            overrotation_angle=over.get("overrotation_angle", self.overrotation_angle),
        )

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseConfig":
        return cls(**data)


@dataclass
class GateSet:
    group: CliffordGroup
    noisy: np.ndarray  # (24, 4, 4)
    rho: np.ndarray
    effect: np.ndarray

    @property
    def ideal(self) -> np.ndarray:
        return self.group.ptms

    @property
    def labels(self) -> tuple[str, ...]:
        return self.group.labels

    def error_channels(self) -> np.ndarray:
        """Per-gate error ``noisy @ ideal^-1`` (noise-after-gate form)."""
        return self.noisy @ np.transpose(self.ideal, (0, 2, 1))


def error_channel(noise: GateNoise) -> np.ndarray:
    return depolarizing_ptm(noise.depolarizing_strength) @ z_rotation_ptm(noise.overrotation_angle)


def make_noisy_gateset(noise: NoiseConfig | None = None) -> GateSet:
    noise = NoiseConfig() if noise is None else noise
    group = clifford_group()
    unknown = set(noise.per_gate) - set(group.labels)
    if unknown:
        raise ConstructionError(f"per-gate overrides name unknown labels: {sorted(unknown)}")
    noisy = np.empty_like(group.ptms)
    for k, label in enumerate(group.labels):
        gn = noise.gate_noise(label)
        if not 0.0 <= gn.depolarizing_strength <= 1.0:
            raise ConstructionError(f"depolarizing strength for {label} must lie in [0, 1]")
        lam = error_channel(gn)
        noisy[k] = group.ptms[k] @ lam if noise.noise_before_gate else lam @ group.ptms[k]
        if not (is_trace_preserving(noisy[k]) and is_completely_positive(noisy[k])):
            raise ConstructionError(f"noisy channel for {label} is not CPTP")

    r, a, b = noise.prep_polarization, noise.meas_offset, noise.meas_contrast
    if abs(r) > 1.0:
        raise ConstructionError("prepared-state polarization must lie in [-1, 1]")
    if a - abs(b) < 0.0 or a + abs(b) > 1.0:
        raise ConstructionError("measurement effect must satisfy 0 <= E <= I")
    rho = np.array([1.0, 0.0, 0.0, r]) / np.sqrt(2)
    effect = np.sqrt(2) * np.array([a, 0.0, 0.0, b])
    return GateSet(group=group, noisy=noisy, rho=rho, effect=effect)


@dataclass
class SequenceRecord:
    gates: list  # group indices in time order, closing inverse last
    interleaved_with: str | None = None
    survival_prob: float | None = None
    outcome: int | None = None

    @property
    def m(self) -> int:
        n_slots = len(self.gates) - 1
        return n_slots // 2 if self.interleaved_with is not None else n_slots

    def as_dict(self, labels: Sequence[str] | None = None) -> dict:
        gates = [labels[g] for g in self.gates] if labels is not None else [int(g) for g in self.gates]
        return {
            "m": self.m,
            "interleaved_with": self.interleaved_with,
            "gates": gates,
            "survival_prob": self.survival_prob,
            "outcome": self.outcome,
        }


def _draw_sequences(group: CliffordGroup, m: int, n: int, interleave: int | None,
                    rng: np.random.Generator) -> np.ndarray:
    """(n, L) array of gate indices for ``n`` independent sequences."""
    if m < 1:
        raise DomainError(f"simulated sequences need m >= 1, got {m}")
    rand = rng.integers(0, GROUP_ORDER, size=(n, m))
    if interleave is None:
        body = rand
    else:
        body = np.empty((n, 2 * m), dtype=rand.dtype)
        body[:, 0::2] = rand
        body[:, 1::2] = interleave
    comp = np.full(n, group.identity)
    for j in range(body.shape[1]):
        comp = group.mult[body[:, j], comp]
    return np.column_stack([body, group.inverse[comp]])


def _clamp(q: np.ndarray) -> np.ndarray:
    over = np.maximum(q - 1.0, 0.0) + np.maximum(-q, 0.0)
    worst = float(np.max(over)) if over.size else 0.0
    if worst > CLAMP_LOG_THRESHOLD:
        log.warning("clamped survival probability by %.3g", worst)
    return np.clip(q, 0.0, 1.0)


def _batch_survival(gateset: GateSet, gates: np.ndarray) -> np.ndarray:
    v = np.broadcast_to(gateset.rho, (gates.shape[0], 4)).copy()
    for j in range(gates.shape[1]):
        v = np.einsum("kij,kj->ki", gateset.noisy[gates[:, j]], v)
    return _clamp(v @ gateset.effect)


def random_sequence(m: int, gateset: GateSet, interleave: str | None = None,
                    rng: np.random.Generator | None = None) -> SequenceRecord:
    rng = np.random.default_rng() if rng is None else rng
    c = None if interleave is None else gateset.group.index(interleave)
    gates = _draw_sequences(gateset.group, m, 1, c, rng)[0]
    return SequenceRecord(gates=[int(g) for g in gates], interleaved_with=interleave)


def ideal_composition(gateset: GateSet, seq: SequenceRecord) -> np.ndarray:
    R = np.eye(4)
    for g in seq.gates:
        R = gateset.ideal[g] @ R
    return R


def sequence_survival(gateset: GateSet, seq: SequenceRecord) -> float:
    v = gateset.rho.copy()
    for g in seq.gates:
        v = gateset.noisy[g] @ v
    return float(_clamp(np.array([gateset.effect @ v]))[0])


def sample_model_data(x_true: ModelParams, designs: Sequence[tuple[ExperimentDesign, int]],
                      rng: np.random.Generator) -> list[Datum]:
    """Binomial draws from the zeroth-order model, one Bernoulli trial per shot."""
    x = x_true.as_array()
    out = []
    for e, shots in designs:
        q = float(np.clip(survival_probabilities(x, e.m, e.interleaved), 0.0, 1.0))
        out.append(Datum(e, int(shots), int(rng.binomial(int(shots), q))))
    return out


def sample_gate_data(
    gateset: GateSet,
    designs: Sequence[tuple[ExperimentDesign, int]],
    rng: np.random.Generator,
    interleaved_gate: str = "X",
    keep_records: bool = False,
):
    """Gate-level data with a fresh random sequence for every shot.

    Returns the aggregated dataset, plus the per-shot records when
    ``keep_records`` is set.
    """
    c = gateset.group.index(interleaved_gate)
    data, records = [], []
    for e, shots in designs:
        gates = _draw_sequences(gateset.group, e.m, int(shots), c if e.interleaved else None, rng)
        q = _batch_survival(gateset, gates)
        outcomes = (rng.random(len(q)) < q).astype(int)
        data.append(Datum(e, int(shots), int(outcomes.sum())))
        if keep_records:
            label = interleaved_gate if e.interleaved else None
            records.extend(
                SequenceRecord([int(g) for g in row], label, float(p), int(o))
                for row, p, o in zip(gates, q, outcomes)
            )
    return (data, records) if keep_records else data


def twirl(channel: np.ndarray) -> np.ndarray:
    """Clifford twirl: average of ``G^-1 channel G`` over the group."""
    group = clifford_group()
    # PTMs of unitaries are orthogonal, so G^-1 = G^T
    return np.einsum("gji,jk,gkl->il", group.ptms, channel, group.ptms) / GROUP_ORDER


@dataclass(frozen=True)
class GroundTruth:
    p: float
    A: float
    B: float
    F_ave: float
    p_interleaved: float | None = None
    p_tilde: float | None = None

    def as_model_params(self) -> ModelParams:
        if self.p_tilde is None:
            raise DomainError("interleaved ground truth not computed; pass interleaved_gate")
        return ModelParams(self.p_tilde, self.p, self.A, self.B)


def true_params_from_gateset(gateset: GateSet, interleaved_gate: str | None = None) -> GroundTruth:
    """Zeroth-order parameters of the average error channel.

    For an interleaved gate C, the per-slot error is ``Lambda_C o C Lambda C^-1``
    and ``p_tilde`` is its depolarizing parameter divided by ``p``.
    """
    avg = gateset.error_channels().mean(axis=0)
    p = unital_p(twirl(avg))
    A = float(gateset.effect @ avg @ (gateset.rho - MAXIMALLY_MIXED))
    B = float(gateset.effect @ avg @ MAXIMALLY_MIXED)
    F = fidelity_from_p(p, D)
    if interleaved_gate is None:
        return GroundTruth(p, A, B, F)
    c = gateset.group.index(interleaved_gate)
    C = gateset.ideal[c]
    lam_c = gateset.error_channels()[c]
    p_int = unital_p(twirl(lam_c @ C @ avg @ C.T))
    return GroundTruth(p, A, B, F, p_interleaved=p_int, p_tilde=p_int / p)


def exact_average_survival(gateset: GateSet, m: int, interleaved_gate: str | None = None) -> float:
    """Survival averaged exactly over all length-m sequences.

    Tracks the noisy state conditioned on the ideal composition so far, so the
    cost is linear in m rather than exponential.
    """
    if m < 1:
        raise DomainError(f"simulated sequences need m >= 1, got {m}")
    group = gateset.group
    c = None if interleaved_gate is None else group.index(interleaved_gate)
    v = np.zeros((GROUP_ORDER, 4))
    v[group.identity] = gateset.rho
    for _ in range(m):
        nxt = np.zeros_like(v)
        for g in range(GROUP_ORDER):
            nxt[group.mult[g]] += v @ gateset.noisy[g].T
        v = nxt / GROUP_ORDER
        if c is not None:
            nxt = np.zeros_like(v)
            nxt[group.mult[c]] = v @ gateset.noisy[c].T
            v = nxt
    closing = gateset.noisy[group.inverse]  # closing gate for each composition
    return float(np.einsum("i,hij,hj->", gateset.effect, closing, v))


@dataclass(frozen=True)
class VarianceDecomposition:
    total: float
    between: float
    within: float
    mean: float


def variance_decomposition(gateset: GateSet, m: int, n_sequences: int, rng: np.random.Generator,
                           interleaved_gate: str | None = None) -> VarianceDecomposition:
    """Split the single-shot outcome variance into between-sequence and
    mean within-sequence parts over ``n_sequences`` random sequences."""
    if n_sequences < 2:
        raise DomainError("n_sequences must be at least 2")
    c = None if interleaved_gate is None else gateset.group.index(interleaved_gate)
    gates = _draw_sequences(gateset.group, m, n_sequences, c, rng)
    p = _batch_survival(gateset, gates)
    q = float(p.mean())
    return VarianceDecomposition(
        total=q * (1.0 - q),
        between=float(np.mean((p - q) ** 2)),
        within=float(np.mean(p * (1.0 - p))),
        mean=q,
    )


def write_records(records: Sequence[SequenceRecord], path, labels: Sequence[str] | None = None) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.as_dict(labels)) + "\n")
