"""Factored pure-state simulator.

Qubits live in disjoint registers that are merged only when a two-qubit
operation spans them.  Measured qubits are removed from their register
immediately, so memory tracks the entangled frontier rather than the total
number of particles.

Measurement basis convention: ``|+_t> = (|0> + e^{it}|1>)/sqrt(2)`` is
outcome 0, ``|-_t>`` is outcome 1.  Bell outcomes ``(x, z)`` label the state
``(I (x) X^x Z^z)(|00> + |11>)/sqrt(2)``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .angle import Angle

__all__ = [
    "ContractError",
    "EntangledError",
    "Register",
    "RegisterPool",
    "bell_vector",
    "plus_vector",
    "draw",
]

SQRT1_2 = 1 / math.sqrt(2)
NORM_TOL = 1e-10
PRUNE = 1e-12


class ContractError(Exception):
    """Operation on a retired/unknown qubit or otherwise malformed call."""


class EntangledError(ContractError):
    """Requested qubits are entangled with qubits outside the request."""


def plus_vector(theta: Angle | float) -> np.ndarray:
    t = theta.radians if isinstance(theta, Angle) else theta
    return np.array([SQRT1_2, SQRT1_2 * cmath.exp(1j * t)], dtype=complex)


def bell_vector(x: int, z: int) -> np.ndarray:
    v = np.zeros(4, dtype=complex)
    for i in (0, 1):
        v[2 * i + (i ^ x)] = SQRT1_2 * (-1) ** (z * i)
    return v


_BELL = np.array([bell_vector(x, z) for x in (0, 1) for z in (0, 1)])


def draw(probs, rng, tag: str | None = None) -> int:
    """Pick an index with the given probabilities.

    ``rng`` may be a numpy Generator or an object exposing ``pick(probs, tag)``
    (used for forced/enumerated outcomes).
    """
    if hasattr(rng, "pick"):
        return rng.pick(tuple(probs), tag)
    u = rng.random()
    acc = 0.0
    last = 0
    for i, p in enumerate(probs):
        if p <= PRUNE:
            continue
        last = i
        acc += p
        if u < acc:
            return i
    return last


@dataclass
class Register:
    members: list[int]
    psi: np.ndarray  # tensor of shape (2,)*len(members)

    def copy(self) -> Register:
        return Register(list(self.members), self.psi.copy())


@dataclass
class RegisterPool:
    regs: dict[int, Register] = field(default_factory=dict)
    where: dict[int, int] = field(default_factory=dict)
    retired: dict[int, object] = field(default_factory=dict)
    next_qid: int = 0
    next_rid: int = 0

    # -- allocation -----------------------------------------------------
    def _new_register(self, members: list[int], psi: np.ndarray) -> None:
        rid = self.next_rid
        self.next_rid += 1
        self.regs[rid] = Register(members, psi.reshape((2,) * len(members)))
        for q in members:
            self.where[q] = rid

    def _fresh(self, k: int) -> list[int]:
        ids = list(range(self.next_qid, self.next_qid + k))
        self.next_qid += k
        return ids

    def alloc_state(self, vec) -> list[int]:
        vec = np.asarray(vec, dtype=complex)
        k = int(round(math.log2(vec.size)))
        if 2**k != vec.size:
            raise ContractError("state length must be a power of two")
        ids = self._fresh(k)
        self._new_register(ids, vec / np.linalg.norm(vec))
        return ids

    def alloc_plus_theta(self, theta: Angle) -> int:
        return self.alloc_state(plus_vector(theta))[0]

    def alloc_bell(self, x: int, z: int) -> tuple[int, int]:
        a, b = self.alloc_state(bell_vector(x, z))
        return a, b

    # -- lookup ---------------------------------------------------------
    def live(self, q: int) -> bool:
        return q in self.where

    def _locate(self, q: int) -> tuple[Register, int]:
        rid = self.where.get(q)
        if rid is None:
            state = "retired" if q in self.retired else "unknown"
            raise ContractError(f"qubit {q} is {state}")
        reg = self.regs[rid]
        return reg, reg.members.index(q)

    def register_count(self) -> int:
        return len(self.regs)

    def register_members(self, q: int) -> list[int]:
        return list(self._locate(q)[0].members)

    def _merge(self, a: int, b: int) -> Register:
        ra, rb = self.where[a], self.where[b]
        if ra == rb:
            return self.regs[ra]
        A, B = self.regs[ra], self.regs.pop(rb)
        A.psi = np.multiply.outer(A.psi, B.psi)
        A.members.extend(B.members)
        for q in B.members:
            self.where[q] = ra
        return A

    # -- gates ----------------------------------------------------------
    def apply_1q(self, q: int, u: np.ndarray) -> None:
        reg, i = self._locate(q)
        reg.psi = np.moveaxis(np.tensordot(u, reg.psi, axes=([1], [i])), 0, i)

    def apply_x(self, q: int) -> None:
        reg, i = self._locate(q)
        reg.psi = np.flip(reg.psi, axis=i).copy()

    def apply_z(self, q: int) -> None:
        reg, i = self._locate(q)
        idx = [slice(None)] * reg.psi.ndim
        idx[i] = 1
        reg.psi[tuple(idx)] *= -1

    def apply_cz(self, a: int, b: int) -> None:
        if a == b:
            raise ContractError("CZ needs two distinct qubits")
        self._locate(a), self._locate(b)
        reg = self._merge(a, b)
        i, j = reg.members.index(a), reg.members.index(b)
        idx = [slice(None)] * reg.psi.ndim
        idx[i] = 1
        idx[j] = 1
        reg.psi[tuple(idx)] *= -1

    # -- measurement ----------------------------------------------------
    def _angle_branches(self, q: int, theta: Angle):
        reg, i = self._locate(q)
        t = np.moveaxis(reg.psi, i, 0)
        ph = cmath.exp(-1j * theta.radians)
        branches = ((t[0] + ph * t[1]) * SQRT1_2, (t[0] - ph * t[1]) * SQRT1_2)
        probs = [float(np.vdot(c, c).real) for c in branches]
        return reg, branches, probs

    def _collapse(self, reg: Register, gone: list[int], comp: np.ndarray, p: float) -> None:
        rid = self.where[gone[0]]
        for q in gone:
            reg.members.remove(q)
            del self.where[q]
        if reg.members:
            reg.psi = comp / math.sqrt(p)
        else:
            del self.regs[rid]

    def angle_probs(self, q: int, theta: Angle) -> tuple[float, float]:
        _, _, probs = self._angle_branches(q, theta)
        return probs[0], probs[1]

    def measure_angle(self, q: int, theta: Angle, rng, tag: str | None = None) -> int:
        reg, branches, probs = self._angle_branches(q, theta)
        k = draw(probs, rng, tag)
        self._collapse(reg, [q], branches[k], probs[k])
        self.retired[q] = k
        return k

    def project_angle(self, q: int, theta: Angle, outcome: int) -> float:
        """Force ``outcome``; return its Born probability."""
        reg, branches, probs = self._angle_branches(q, theta)
        if probs[outcome] <= PRUNE:
            raise ContractError("projection onto a zero-probability outcome")
        self._collapse(reg, [q], branches[outcome], probs[outcome])
        self.retired[q] = outcome
        return probs[outcome]

    def measure_z(self, q: int, rng, tag: str | None = None) -> int:
        reg, i = self._locate(q)
        t = np.moveaxis(reg.psi, i, 0)
        probs = [float(np.vdot(t[k], t[k]).real) for k in (0, 1)]
        k = draw(probs, rng, tag)
        self._collapse(reg, [q], t[k], probs[k])
        self.retired[q] = k
        return k

    def _bell_branches(self, a: int, b: int):
        if a == b:
            raise ContractError("Bell measurement needs two distinct qubits")
        self._locate(a), self._locate(b)
        reg = self._merge(a, b)
        i, j = reg.members.index(a), reg.members.index(b)
        t = np.moveaxis(reg.psi, (i, j), (0, 1))
        rest = t.shape[2:]
        t = t.reshape(4, -1)
        comps = (_BELL.conj() @ t).reshape((4,) + rest)
        probs = [float(np.vdot(c, c).real) for c in comps]
        return reg, comps, probs

    def measure_bell(self, a: int, b: int, rng, tag: str | None = None) -> tuple[int, int]:
        reg, comps, probs = self._bell_branches(a, b)
        k = draw(probs, rng, tag)
        self._collapse(reg, [a, b], comps[k], probs[k])
        x, z = divmod(k, 2)
        self.retired[a] = self.retired[b] = (x, z)
        return x, z

    def project_bell(self, a: int, b: int, x: int, z: int) -> float:
        reg, comps, probs = self._bell_branches(a, b)
        k = 2 * x + z
        if probs[k] <= PRUNE:
            raise ContractError("projection onto a zero-probability outcome")
        self._collapse(reg, [a, b], comps[k], probs[k])
        self.retired[a] = self.retired[b] = (x, z)
        return probs[k]

    # -- inspection -----------------------------------------------------
    def state_vector(self, qubits) -> np.ndarray:
        """Pure joint state of ``qubits`` in the given order (global phase free).

        Raises :class:`EntangledError` if they share entanglement with any
        qubit outside the list.
        """
        qubits = list(qubits)
        if len(set(qubits)) != len(qubits):
            raise ContractError("duplicate qubits")
        wanted = set(qubits)
        order: list[int] = []
        vec = np.ones(1, dtype=complex)
        seen: set[int] = set()
        for q in qubits:
            self._locate(q)
            rid = self.where[q]
            if rid in seen:
                continue
            seen.add(rid)
            reg = self.regs[rid]
            inside = [k for k, m in enumerate(reg.members) if m in wanted]
            outside = [k for k, m in enumerate(reg.members) if m not in wanted]
            t = np.transpose(reg.psi, inside + outside).reshape(2 ** len(inside), -1)
            if outside:
                u, s, _ = np.linalg.svd(t, full_matrices=False)
                if len(s) > 1 and s[1] > 1e-7:
                    raise EntangledError(f"qubits {qubits} are entangled with outside qubits")
                part = u[:, 0] * s[0]
            else:
                part = t[:, 0]
            vec = np.kron(vec, part)
            order.extend(reg.members[k] for k in inside)
        perm = [order.index(q) for q in qubits]
        vec = np.transpose(vec.reshape((2,) * len(qubits)), perm).reshape(-1)
        return vec / np.linalg.norm(vec)

    def fidelity(self, qubits, reference) -> float:
        ref = np.asarray(reference, dtype=complex)
        ref = ref / np.linalg.norm(ref)
        return float(abs(np.vdot(ref, self.state_vector(qubits))) ** 2)

    def norms(self) -> list[float]:
        return [float(np.vdot(r.psi, r.psi).real) for r in self.regs.values()]

    def fork(self) -> RegisterPool:
        return RegisterPool(
            {rid: r.copy() for rid, r in self.regs.items()},
            dict(self.where),
            dict(self.retired),
            self.next_qid,
            self.next_rid,
        )

    def key(self) -> tuple:
        """Canonical hashable summary of the live state, up to global phase
        per register and rounding at 1e-9.  Used to merge identical branches."""
        out = []
        for reg in sorted(self.regs.values(), key=lambda r: r.members[0]):
            flat = reg.psi.reshape(-1)
            k = int(np.argmax(np.abs(flat) > 1e-6))
            ph = flat[k] / abs(flat[k])
            v = np.round(flat * ph.conjugate(), 9) + 0.0
            out.append((tuple(reg.members), v.tobytes()))
        return tuple(out)

    def dump(self) -> dict:
        return {
            "registers": [
                {
                    "members": list(r.members),
                    "amplitudes": [[float(a.real), float(a.imag)] for a in r.psi.reshape(-1)],
                }
                for r in self.regs.values()
            ],
            "retired": sorted(self.retired),
        }

