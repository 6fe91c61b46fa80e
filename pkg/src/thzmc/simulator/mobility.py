"""Random direction mobility (RDM) of blockers in a disc arena.

A blocker walks straight at constant speed for an exponentially distributed
time, then picks a fresh uniform heading. At the arena boundary it reflects
specularly. Reflection and exponential re-draws both preserve the uniform
position / isotropic heading distribution, so a population started uniform
stays a uniform PPP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = ["Arena", "BlockerState", "initial_state", "rdm_step", "straight_legs"]

LEG_MEAN = 5.0  # s


@dataclass(frozen=True)
class Arena:
    radius: float
    speed: float = 1.0
    leg_mean: float = LEG_MEAN

    def __post_init__(self):
        if self.radius <= 0 or self.speed <= 0 or self.leg_mean <= 0:
            raise ValueError("arena radius, speed and leg mean must be positive")


@dataclass(frozen=True, eq=False)
class BlockerState:
    """State of a blocker population (one row per blocker).

    ``position`` is (n, 2) in m, ``heading`` in rad, ``time_to_turn`` > 0 in s.
    """

    position: np.ndarray
    heading: np.ndarray
    time_to_turn: np.ndarray

    def __len__(self):
        return len(self.heading)


def initial_state(n: int, arena: Arena, rng: np.random.Generator) -> BlockerState:
    """Stationary start: uniform positions and headings, memoryless turn clocks."""
    r = arena.radius * np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * math.pi, n)
    return BlockerState(np.column_stack([r * np.cos(a), r * np.sin(a)]),
                        rng.uniform(0, 2 * math.pi, n),
                        rng.exponential(arena.leg_mean, n))


def _time_to_wall(pos: np.ndarray, ux: np.ndarray, uy: np.ndarray, arena: Arena) -> np.ndarray:
    px, py = pos[:, 0], pos[:, 1]
    pu = px * ux + py * uy
    c = np.minimum(px * px + py * py - arena.radius ** 2, 0.0)
    return (-pu + np.sqrt(pu * pu - c)) / arena.speed


def _advance(pos, heading, ttt, dt_left, arena: Arena, rng, record=None, t_now=None):
    """Move every row for ``dt_left`` seconds (per row), leg by leg.

    When ``record`` is a list, each straight piece is appended as a tuple of
    arrays ``(t0, t1, x0, y0, vx, vy)``.
    """
    pos, heading, ttt = pos.copy(), heading.copy(), ttt.copy()
    left = np.asarray(dt_left, dtype=float).copy()
    t = None if t_now is None else np.asarray(t_now, dtype=float).copy()
    active = np.nonzero(left > 0)[0]
    while active.size:
        p = pos[active]
        ux, uy = np.cos(heading[active]), np.sin(heading[active])
        wall = _time_to_wall(p, ux, uy, arena)
        step = np.minimum(np.minimum(ttt[active], wall), left[active])
        hit_wall = (wall <= step) & (wall < ttt[active])
        vx, vy = arena.speed * ux, arena.speed * uy
        if record is not None:
            t0 = t[active]
            record.append((t0, t0 + step, p[:, 0].copy(), p[:, 1].copy(), vx, vy))
            t[active] = t0 + step
        newp = p + np.column_stack([vx, vy]) * step[:, None]
        # guard against drifting outside through rounding
        rad = np.hypot(newp[:, 0], newp[:, 1])
        over = rad > arena.radius
        newp[over] *= (arena.radius / rad[over])[:, None]
        pos[active] = newp
        ttt[active] -= step
        left[active] -= step
        if np.any(hit_wall):
            idx = active[hit_wall]
            q = pos[idx]
            nx, ny = q[:, 0] / arena.radius, q[:, 1] / arena.radius
            hx, hy = np.cos(heading[idx]), np.sin(heading[idx])
            dot = hx * nx + hy * ny
            heading[idx] = np.arctan2(hy - 2 * dot * ny, hx - 2 * dot * nx)
        turn = ttt[active] <= 0
        if np.any(turn):
            idx = active[turn]
            heading[idx] = rng.uniform(0, 2 * math.pi, idx.size)
            ttt[idx] = rng.exponential(arena.leg_mean, idx.size)
        active = active[left[active] > 1e-12]
    return pos, heading, ttt


def rdm_step(state: BlockerState, dt: float, arena: Arena, rng: np.random.Generator) -> BlockerState:
    """Advance every blocker by ``dt`` seconds."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    pos, heading, ttt = _advance(state.position, state.heading, state.time_to_turn,
                                 np.full(len(state), dt), arena, rng)
    return replace(state, position=pos, heading=heading, time_to_turn=ttt)


def straight_legs(state: BlockerState, t_end: float, arena: Arena, rng: np.random.Generator,
                  batch: int = 64):
    """Yield straight trajectory pieces covering ``[0, t_end]`` for every blocker.

    Each item is ``(t0, t1, x0, y0, vx, vy)`` (arrays of equal length); the
    position at time t in ``[t0, t1]`` is ``(x0 + vx (t - t0), y0 + vy (t - t0))``.
    Pieces end at turns and wall reflections. ``batch`` groups that many
    legs per yield to amortise Python overhead.
    """
    pos, heading, ttt = state.position, state.heading, state.time_to_turn
    n = len(state)
    t = np.zeros(n)
    horizon = batch * arena.leg_mean
    while np.any(t < t_end):
        target = np.minimum(t + horizon, t_end)
        record: list = []
        pos, heading, ttt = _advance(pos, heading, ttt, target - t, arena, rng,
                                     record=record, t_now=t)
        t = target
        if record:
            yield tuple(np.concatenate(parts) for parts in zip(*record))
