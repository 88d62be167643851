"""2D moving-least-squares material point method over the triangle soup.

Every triangle vertex of a plane-locked (2d-mode) scene becomes an elastic
particle in the (x, z) plane. Each substep scatters mass/momentum to a
background grid with quadratic B-spline weights and an MLS force term from a
fixed-corotated energy, applies gravity and sticky boundaries on the grid,
then gathers velocities back, updating each particle's affine matrix and
deformation gradient. Frames write vertex positions back into the scene
through the inverse triangle parametrization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .editing import rebuild_gaussians
from .scene import Mode, Scene
from .trainer import plane_extents

CFL_FACTOR = 10.0  # dt bound: dx / (CFL_FACTOR * wave speed)


class NonFiniteState(RuntimeError):
    """A particle left the numeric range; the message names it."""


@dataclass
class MaterialParams:
    youngs_modulus: float = 1e4
    poisson: float = 0.3
    density: float = 1.0
    gravity: tuple = (0.0, -9.8)
    dt: float | None = None          # auto: half the CFL bound of the grid
    material: str = "elastic"

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("youngs_modulus must be > 0")
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError("poisson must lie in [0, 0.5)")
        if self.density <= 0:
            raise ValueError("density must be > 0")
        if self.material != "elastic":
            raise NotImplementedError(
                f"material {self.material!r} is not implemented; only "
                f"'elastic' ships")

    @property
    def mu(self):
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson))

    @property
    def lam(self):
        nu = self.poisson
        return (self.youngs_modulus * nu) / ((1.0 + nu) * (1.0 - 2.0 * nu))

    def wave_speed(self):
        return math.sqrt(self.youngs_modulus / self.density)


@dataclass
class MpmGrid:
    """Background grid over a plane rectangle with sticky walls/floor."""

    lo: np.ndarray
    hi: np.ndarray
    resolution: int = 128
    sticky: bool = True

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(self.hi <= self.lo):
            raise ValueError("grid needs hi > lo on both axes")

    @property
    def dx(self):
        return (self.hi - self.lo) / self.resolution

    @classmethod
    def for_scene(cls, scene: Scene, resolution=128, sticky=True):
        if scene.camera is not None:
            rig = scene.camera
            dev_x, dev_z = plane_extents(rig.cam_dist, rig.fov_vert, rig.aspect)
        else:
            tri = scene.triangles()
            dev_x = 1.5 * float(np.max(np.abs(tri[:, :, 0])))
            dev_z = 1.5 * float(np.max(np.abs(tri[:, :, 2])))
        return cls(lo=np.array([-dev_x, -dev_z]), hi=np.array([dev_x, dev_z]),
                   resolution=resolution, sticky=sticky)


@dataclass
class ParticleSystem:
    """Plain arrays of particle state plus the (gaussian, vertex) binding."""

    x: np.ndarray        # (P, 2) plane positions (world x, z)
    v: np.ndarray        # (P, 2)
    F: np.ndarray        # (P, 2, 2) deformation gradient
    C: np.ndarray        # (P, 2, 2) affine velocity
    mass: np.ndarray     # (P,)
    volume: np.ndarray   # (P,)
    binding: np.ndarray  # (P, 2) rows (gaussian index, vertex slot)

    @property
    def size(self):
        return int(self.x.shape[0])

    def momentum(self):
        return self.mass[:, None] * self.v

    def triangles_xz(self):
        return self.x.reshape(-1, 3, 2)


def couple_init(scene: Scene, grid: MpmGrid | None = None,
                material: MaterialParams | None = None) -> ParticleSystem:
    """Turn each triangle vertex of a 2d-mode scene into one particle."""
    if scene.mode is not Mode.TWO_D:
        raise ValueError(
            f"physics coupling requires the 2d control mode (scene is "
            f"{scene.mode.value!r}); retrain or convert the scene to 2d")
    grid = grid or MpmGrid.for_scene(scene)
    material = material or MaterialParams()
    tri = scene.triangles()
    n = scene.size
    pos = tri[:, :, [0, 2]].reshape(-1, 2).copy()
    p = pos.shape[0]
    vol = float(grid.dx[0] * grid.dx[1]) / 4.0
    eye = np.tile(np.eye(2), (p, 1, 1))
    binding = np.stack([np.repeat(np.arange(n), 3), np.tile(np.arange(3), n)],
                       axis=1)
    return ParticleSystem(
        x=pos, v=np.zeros((p, 2)), F=eye, C=np.zeros((p, 2, 2)),
        mass=np.full(p, material.density * vol), volume=np.full(p, vol),
        binding=binding)


@njit(cache=True)
def _p2g(x, v, F, C, mass, volume, mu, lam, dt, lo, dx, grid_mom, grid_mass):
    nn0, nn1 = grid_mass.shape
    inv0 = 1.0 / dx[0]
    inv1 = 1.0 / dx[1]
    for p in range(x.shape[0]):
        gx = (x[p, 0] - lo[0]) * inv0
        gz = (x[p, 1] - lo[1]) * inv1
        bx = int(np.floor(gx - 0.5))
        bz = int(np.floor(gz - 0.5))
        fx = gx - bx
        fz = gz - bz
        wx0 = 0.5 * (1.5 - fx) ** 2
        wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2
        wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2

        f00 = F[p, 0, 0]
        f01 = F[p, 0, 1]
        f10 = F[p, 1, 0]
        f11 = F[p, 1, 1]
        # 2D polar decomposition of F (rotation part)
        theta = np.arctan2(f10 - f01, f00 + f11)
        ct = np.cos(theta)
        st = np.sin(theta)
        jdet = f00 * f11 - f01 * f10
        # Kirchhoff stress of fixed corotated: 2mu (F - R) F^T + lam J(J-1) I
        p00 = 2.0 * mu * (f00 - ct)
        p01 = 2.0 * mu * (f01 + st)
        p10 = 2.0 * mu * (f10 - st)
        p11 = 2.0 * mu * (f11 - ct)
        t00 = p00 * f00 + p01 * f01 + lam * jdet * (jdet - 1.0)
        t01 = p00 * f10 + p01 * f11
        t10 = p10 * f00 + p11 * f01
        t11 = p10 * f10 + p11 * f11 + lam * jdet * (jdet - 1.0)
        # MLS force term: -dt * V * tau * D^-1, D = dx^2/4 per axis
        a0 = -dt * volume[p] * 4.0 * inv0 * inv0
        a1 = -dt * volume[p] * 4.0 * inv1 * inv1
        s00 = t00 * a0 + mass[p] * C[p, 0, 0]
        s01 = t01 * a1 + mass[p] * C[p, 0, 1]
        s10 = t10 * a0 + mass[p] * C[p, 1, 0]
        s11 = t11 * a1 + mass[p] * C[p, 1, 1]

        for i in range(3):
            wi = wx0 if i == 0 else (wx1 if i == 1 else wx2)
            dpx = (bx + i - gx) * dx[0]
            ni = bx + i
            if ni < 0 or ni >= nn0:
                continue
            for j in range(3):
                nj = bz + j
                if nj < 0 or nj >= nn1:
                    continue
                wj = wz0 if j == 0 else (wz1 if j == 1 else wz2)
                w = wi * wj
                dpz = (bz + j - gz) * dx[1]
                grid_mom[ni, nj, 0] += w * (mass[p] * v[p, 0]
                                            + s00 * dpx + s01 * dpz)
                grid_mom[ni, nj, 1] += w * (mass[p] * v[p, 1]
                                            + s10 * dpx + s11 * dpz)
                grid_mass[ni, nj] += w * mass[p]


@njit(cache=True)
def _g2p(x, v, F, C, dt, lo, dx, grid_vel):
    nn0, nn1, _ = grid_vel.shape
    inv0 = 1.0 / dx[0]
    inv1 = 1.0 / dx[1]
    for p in range(x.shape[0]):
        gx = (x[p, 0] - lo[0]) * inv0
        gz = (x[p, 1] - lo[1]) * inv1
        bx = int(np.floor(gx - 0.5))
        bz = int(np.floor(gz - 0.5))
        fx = gx - bx
        fz = gz - bz
        wx0 = 0.5 * (1.5 - fx) ** 2
        wx1 = 0.75 - (fx - 1.0) ** 2
        wx2 = 0.5 * (fx - 0.5) ** 2
        wz0 = 0.5 * (1.5 - fz) ** 2
        wz1 = 0.75 - (fz - 1.0) ** 2
        wz2 = 0.5 * (fz - 0.5) ** 2
        v0 = 0.0
        v1 = 0.0
        b00 = 0.0
        b01 = 0.0
        b10 = 0.0
        b11 = 0.0
        for i in range(3):
            wi = wx0 if i == 0 else (wx1 if i == 1 else wx2)
            ni = bx + i
            if ni < 0 or ni >= nn0:
                continue
            dpx = (bx + i - gx) * dx[0]
            for j in range(3):
                nj = bz + j
                if nj < 0 or nj >= nn1:
                    continue
                wj = wz0 if j == 0 else (wz1 if j == 1 else wz2)
                w = wi * wj
                dpz = (bz + j - gz) * dx[1]
                gv0 = grid_vel[ni, nj, 0]
                gv1 = grid_vel[ni, nj, 1]
                v0 += w * gv0
                v1 += w * gv1
                b00 += w * gv0 * dpx
                b01 += w * gv0 * dpz
                b10 += w * gv1 * dpx
                b11 += w * gv1 * dpz
        v[p, 0] = v0
        v[p, 1] = v1
        c00 = b00 * 4.0 * inv0 * inv0
        c01 = b01 * 4.0 * inv1 * inv1
        c10 = b10 * 4.0 * inv0 * inv0
        c11 = b11 * 4.0 * inv1 * inv1
        C[p, 0, 0] = c00
        C[p, 0, 1] = c01
        C[p, 1, 0] = c10
        C[p, 1, 1] = c11
        f00 = F[p, 0, 0]
        f01 = F[p, 0, 1]
        f10 = F[p, 1, 0]
        f11 = F[p, 1, 1]
        n00 = (1.0 + dt * c00) * f00 + dt * c01 * f10
        n01 = (1.0 + dt * c00) * f01 + dt * c01 * f11
        n10 = dt * c10 * f00 + (1.0 + dt * c11) * f10
        n11 = dt * c10 * f01 + (1.0 + dt * c11) * f11
        jdet = n00 * n11 - n01 * n10
        # survive violent states: pull the determinant back into [0.1, 10]
        if jdet < 0.1 or jdet > 10.0:
            target = 0.1 if jdet < 0.1 else 10.0
            scale = np.sqrt(abs(target / jdet)) if jdet != 0.0 else 1.0
            n00 *= scale
            n01 *= scale
            n10 *= scale
            n11 *= scale
        F[p, 0, 0] = n00
        F[p, 0, 1] = n01
        F[p, 1, 0] = n10
        F[p, 1, 1] = n11
        x[p, 0] += dt * v0
        x[p, 1] += dt * v1


class Simulation:
    """Owns particle state and advances it substep by substep."""

    def __init__(self, scene: Scene, material: MaterialParams | None = None,
                 grid: MpmGrid | None = None):
        self.material = material or MaterialParams()
        self.grid = grid or MpmGrid.for_scene(scene)
        self.scene = scene.copy()
        self.particles = couple_init(scene, self.grid, self.material)
        bound = self.cfl_bound()
        if self.material.dt is None:
            self.dt = 0.5 * bound
        else:
            self.dt = float(self.material.dt)
            if self.dt > bound * (1.0 + 1e-12):
                raise ValueError(
                    f"dt {self.dt:.3e} violates the stability bound "
                    f"{bound:.3e} (dx / ({CFL_FACTOR:g} * wave speed))")
        self._prev_triangles = self.scene.triangles()

    def cfl_bound(self):
        return float(np.min(self.grid.dx)) / (CFL_FACTOR
                                              * self.material.wave_speed())

    def step(self):
        """One MPM substep: scatter, grid update, gather."""
        mpm_step(self.particles, self.grid, self.material, self.dt)

    def frame(self, substeps):
        """Advance substeps and write particle positions back to the scene."""
        for _ in range(substeps):
            self.step()
        if not np.all(np.isfinite(self.particles.x)):
            bad = int(np.argwhere(~np.isfinite(self.particles.x))[0][0])
            g, slot = self.particles.binding[bad]
            raise NonFiniteState(
                f"particle {bad} (gaussian {g}, vertex {slot}) became "
                f"non-finite")
        tri = np.zeros((self.scene.size, 3, 3))
        xz = self.particles.triangles_xz()
        tri[:, :, 0] = xz[:, :, 0]
        tri[:, :, 2] = xz[:, :, 1]
        # degenerate write-back guard: keep the previous frame's triangle
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        bad = np.linalg.norm(cross, axis=1) < 1e-10
        if np.any(bad):
            tri[bad] = self._prev_triangles[bad]
        self.scene = rebuild_gaussians(self.scene, tri)
        self._prev_triangles = tri
        return self.scene.copy()


def mpm_step(particles: ParticleSystem, grid: MpmGrid,
             material: MaterialParams, dt):
    """Advance the particle set by one substep on a fresh background grid."""
    nn = grid.resolution + 1
    grid_mom = np.zeros((nn, nn, 2))
    grid_mass = np.zeros((nn, nn))
    _p2g(particles.x, particles.v, particles.F, particles.C, particles.mass,
         particles.volume, material.mu, material.lam, dt, grid.lo, grid.dx,
         grid_mom, grid_mass)

    grid_vel = np.zeros_like(grid_mom)
    occupied = grid_mass > 0.0
    grid_vel[occupied] = grid_mom[occupied] / grid_mass[occupied, None]
    grid_vel[occupied] += dt * np.asarray(material.gravity)
    if grid.sticky:
        grid_vel[:2, :] = 0.0
        grid_vel[-2:, :] = 0.0
        grid_vel[:, :2] = 0.0
        grid_vel[:, -2:] = 0.0

    _g2p(particles.x, particles.v, particles.F, particles.C, dt,
         grid.lo, grid.dx, grid_vel)
    return grid_mass


def simulate(scene: Scene, material: MaterialParams | None = None,
             frames: int = 30, substeps: int = 25,
             grid: MpmGrid | None = None, trajectory_count: int = 0,
             seed: int = 0):
    """Run the coupled simulation; returns (list of scenes, trajectory rows).

    Trajectory rows are (frame, particle id, x, z) for a seeded random sample
    of particles, one row per frame.
    """
    sim = Simulation(scene, material, grid)
    tracked = np.array([], dtype=np.int64)
    if trajectory_count > 0:
        rng = np.random.default_rng(seed)
        tracked = rng.choice(sim.particles.size,
                             size=min(trajectory_count, sim.particles.size),
                             replace=False)
    out = []
    rows = []
    for frame in range(frames):
        out.append(sim.frame(substeps))
        for pid in tracked:
            rows.append((frame, int(pid), float(sim.particles.x[pid, 0]),
                         float(sim.particles.x[pid, 1])))
    return out, rows
