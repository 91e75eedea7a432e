"""Deterministic radio environment: deployments, antenna gains, path loss,
RSRP, user attachment and SINR.

Conventions
-----------
* positions are 2D coordinates in meters; antennas sit at a configurable
  height, users at 1.5 m
* azimuth is degrees counterclockwise from the +x axis
* tilt is the electrical downtilt in degrees, positive downward
* power quantities: `*_w` watts, `*_dbm` dBm, losses/gains in dB
"""

import json
import math
from dataclasses import dataclass

import numpy as np

TILT_RANGE_DEG = (0.0, 15.0)
POWER_RANGE_W = (10.0, 60.0)
SECTOR_AZIMUTHS_DEG = (0.0, 120.0, 240.0)
HEX_SITE_COUNTS = (1, 7, 19, 37)

THERMAL_NOISE_DBM_PER_HZ = -174.0
RESOURCE_ELEMENT_BW_HZ = 15_000.0


class CapacityError(RuntimeError):
    """Random site placement failed within the retry budget."""


@dataclass
class RadioConfig:
    """Antenna-pattern, propagation and noise constants.

    The parametric sector pattern follows the usual 3GPP macro shape; all
    constants are configurable.
    """

    max_gain_db: float = 15.0
    horiz_beamwidth_deg: float = 65.0
    vert_beamwidth_deg: float = 10.0
    front_back_limit_db: float = 25.0   # A_m, overall attenuation cap
    sidelobe_limit_db: float = 20.0     # SLA_v, vertical attenuation cap
    antenna_height_m: float = 30.0
    ue_height_m: float = 1.5
    n_resource_blocks: int = 100
    noise_figure_db: float = 9.0
    min_path_distance_m: float = 35.0
    shadowing_sigma_db: float = 0.0
    sinr_floor_db: float = -10.0        # normalization floor + empty-cell sentinel
    sinr_ceil_db: float = 30.0

    def noise_power_w(self):
        noise_dbm = (THERMAL_NOISE_DBM_PER_HZ
                     + 10.0 * math.log10(RESOURCE_ELEMENT_BW_HZ)
                     + self.noise_figure_db)
        return 10.0 ** ((noise_dbm - 30.0) / 10.0)


@dataclass
class AntennaConfig:
    """One sector antenna: fixed geometry plus the two controllable knobs."""

    site_xy: tuple
    azimuth_deg: float
    height_m: float
    tilt_deg: float
    power_w: float

    def __post_init__(self):
        if not TILT_RANGE_DEG[0] <= self.tilt_deg <= TILT_RANGE_DEG[1]:
            raise ValueError(f"tilt {self.tilt_deg} outside {TILT_RANGE_DEG}")
        if not POWER_RANGE_W[0] <= self.power_w <= POWER_RANGE_W[1]:
            raise ValueError(f"power {self.power_w} outside {POWER_RANGE_W}")


@dataclass
class Deployment:
    sites: np.ndarray                 # (n_sites, 2)
    cells: list                       # 3 AntennaConfig per site
    intersite_distance: float

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def cell_positions(self):
        return np.array([c.site_xy for c in self.cells])

    def tilts(self):
        return np.array([c.tilt_deg for c in self.cells])

    def powers(self):
        return np.array([c.power_w for c in self.cells])

    def site_of_cell(self, c):
        return c // len(SECTOR_AZIMUTHS_DEG)


@dataclass
class UserPopulation:
    positions: np.ndarray             # (n_users, 2)
    attachment: np.ndarray = None     # serving cell index per user

    @property
    def n_users(self):
        return len(self.positions)


def _cells_for_sites(sites, antenna_height_m, tilt_deg=6.0, power_w=40.0):
    cells = []
    for site in sites:
        for az in SECTOR_AZIMUTHS_DEG:
            cells.append(AntennaConfig(
                site_xy=(float(site[0]), float(site[1])),
                azimuth_deg=az,
                height_m=antenna_height_m,
                tilt_deg=tilt_deg,
                power_w=power_w,
            ))
    return cells


def generate_hexagonal_deployment(n_sites, isd, antenna_height_m=30.0):
    """Sites on a hexagonal lattice (rings around the origin), spacing isd.

    Supported site counts are the full-ring totals 1, 7, 19 and 37; every
    site gets three sectors at azimuths 0/120/240.
    """
    if n_sites not in HEX_SITE_COUNTS:
        raise ValueError(f"n_sites must be one of {HEX_SITE_COUNTS}, got {n_sites}")
    if isd <= 0:
        raise ValueError("isd must be positive")
    rings = HEX_SITE_COUNTS.index(n_sites)
    pts = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            if max(abs(q), abs(r), abs(q + r)) <= rings:
                pts.append((isd * (q + r / 2.0), isd * (math.sqrt(3) / 2.0) * r))
    pts.sort(key=lambda p: (round(p[0] ** 2 + p[1] ** 2, 6), math.atan2(p[1], p[0])))
    sites = np.array(pts)
    return Deployment(
        sites=sites,
        cells=_cells_for_sites(sites, antenna_height_m),
        intersite_distance=float(isd),
    )


def generate_random_deployment(n_sites, min_isd, area_m2, rng,
                               antenna_height_m=30.0, max_tries_per_site=2000):
    """Sites uniform in a centered square of the given area, rejecting draws
    closer than min_isd to an accepted site. Deterministic per seed."""
    rng = np.random.default_rng(rng)
    side = math.sqrt(area_m2)
    placed = []
    for _ in range(n_sites):
        for _ in range(max_tries_per_site):
            cand = rng.uniform(-side / 2.0, side / 2.0, size=2)
            if all(np.hypot(*(cand - p)) >= min_isd for p in placed):
                placed.append(cand)
                break
        else:
            raise CapacityError(
                f"could not place {n_sites} sites with spacing {min_isd} in area {area_m2}"
            )
    sites = np.array(placed)
    return Deployment(
        sites=sites,
        cells=_cells_for_sites(sites, antenna_height_m),
        intersite_distance=float(min_isd),
    )


def wrap_angle_deg(angle):
    """Wrap to (-180, 180]."""
    wrapped = np.mod(np.asarray(angle, dtype=np.float64), 360.0)
    return np.where(wrapped > 180.0, wrapped - 360.0, wrapped)


def horizontal_attenuation_db(phi_rel_deg, cfg):
    a = 12.0 * (np.asarray(phi_rel_deg) / cfg.horiz_beamwidth_deg) ** 2
    return -np.minimum(a, cfg.front_back_limit_db)


def vertical_attenuation_db(theta_deg, tilt_deg, cfg):
    a = 12.0 * ((np.asarray(theta_deg) - tilt_deg) / cfg.vert_beamwidth_deg) ** 2
    return -np.minimum(a, cfg.sidelobe_limit_db)


def antenna_gain_db(cell, user_pos, cfg):
    """Sector gain toward one user position (dB)."""
    dx = user_pos[0] - cell.site_xy[0]
    dy = user_pos[1] - cell.site_xy[1]
    dist = math.hypot(dx, dy)
    phi_rel = wrap_angle_deg(math.degrees(math.atan2(dy, dx)) - cell.azimuth_deg)
    theta = math.degrees(math.atan2(cell.height_m - cfg.ue_height_m, max(dist, 1.0)))
    a_h = horizontal_attenuation_db(phi_rel, cfg)
    a_v = vertical_attenuation_db(theta, cell.tilt_deg, cfg)
    return float(cfg.max_gain_db - np.minimum(-(a_h + a_v), cfg.front_back_limit_db))


def path_loss_db(distance_m, cfg=RadioConfig()):
    """Log-distance macro loss at 2 GHz, clamped below min_path_distance_m."""
    d = np.maximum(np.asarray(distance_m, dtype=np.float64), cfg.min_path_distance_m)
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def tx_power_per_re_dbm(power_w, n_resource_blocks):
    """Transmit power per reference-signal resource element, in dBm.

    The configured maximum power is split across the resource blocks; the
    reference-signal boost gain is one.
    """
    return 10.0 * np.log10(1000.0 * np.asarray(power_w, dtype=np.float64)
                           / n_resource_blocks)


def rsrp_dbm(power_w, gain_db, loss_db, n_resource_blocks):
    return tx_power_per_re_dbm(power_w, n_resource_blocks) + gain_db - loss_db


class LinkBudget:
    """Cell x user matrices: path loss, gain and RSRP.

    Geometry-derived terms (distances, horizontal pattern attenuation,
    elevation angles, path loss) are computed once; `refresh()` rebuilds
    only the tilt/power dependent gain and RSRP matrices.
    """

    def __init__(self, deployment, user_positions, cfg, shadowing_rng=None):
        self.cfg = cfg
        self.deployment = deployment
        pos = np.asarray(user_positions, dtype=np.float64)
        cells = deployment.cells
        cell_xy = deployment.cell_positions
        dx = pos[None, :, 0] - cell_xy[:, 0, None]
        dy = pos[None, :, 1] - cell_xy[:, 1, None]
        dist = np.hypot(dx, dy)
        azimuths = np.array([c.azimuth_deg for c in cells])
        heights = np.array([c.height_m for c in cells])
        phi_rel = wrap_angle_deg(np.degrees(np.arctan2(dy, dx)) - azimuths[:, None])
        self._theta_deg = np.degrees(np.arctan2(
            heights[:, None] - cfg.ue_height_m, np.maximum(dist, 1.0)))
        self._ah_db = horizontal_attenuation_db(phi_rel, cfg)
        self.path_loss_db = path_loss_db(dist, cfg)
        if cfg.shadowing_sigma_db > 0.0:
            rng = np.random.default_rng(shadowing_rng)
            self.path_loss_db = self.path_loss_db + rng.normal(
                0.0, cfg.shadowing_sigma_db, size=dist.shape)
        self.gain_db = None
        self.rsrp_dbm = None
        self.refresh()

    def refresh(self):
        """Recompute gain and RSRP for the current tilts and powers."""
        cfg = self.cfg
        tilts = self.deployment.tilts()
        av_db = vertical_attenuation_db(self._theta_deg, tilts[:, None], cfg)
        self.gain_db = cfg.max_gain_db - np.minimum(
            -(self._ah_db + av_db), cfg.front_back_limit_db)
        tx_dbm = tx_power_per_re_dbm(self.deployment.powers(), cfg.n_resource_blocks)
        self.rsrp_dbm = tx_dbm[:, None] + self.gain_db - self.path_loss_db

    def rsrp_w(self):
        return 10.0 ** ((self.rsrp_dbm - 30.0) / 10.0)


def attach_users(link):
    """Serving cell per user: the cell with maximal RSRP, ties to the
    lowest cell index."""
    return np.argmax(link.rsrp_dbm, axis=0)


def per_user_sinr_db(link, attachment):
    """Per-user reference-signal SINR in dB.

    Computed in linear watts: serving RSRP over the summed RSRP of every
    other cell plus the noise power over one resource element.
    """
    rsrp_w = link.rsrp_w()
    total_w = rsrp_w.sum(axis=0)
    serving_w = rsrp_w[attachment, np.arange(rsrp_w.shape[1])]
    noise_w = link.cfg.noise_power_w()
    sinr = serving_w / (total_w - serving_w + noise_w)
    return 10.0 * np.log10(sinr)


def user_sinr_db(user, link, users):
    return float(per_user_sinr_db(link, users.attachment)[user])


def global_sinr_db(sinr_db):
    """Network-wide mean of the per-user SINRs (dB-domain average)."""
    return float(np.mean(sinr_db))


def local_sinr_db(sinr_db, attachment, n_cells, floor_db):
    """Per-cell mean SINR of attached users; cells with no users get the
    configured floor instead of dividing by zero."""
    out = np.full(n_cells, floor_db, dtype=np.float64)
    sums = np.zeros(n_cells)
    counts = np.zeros(n_cells)
    np.add.at(sums, attachment, sinr_db)
    np.add.at(counts, attachment, 1.0)
    occupied = counts > 0
    out[occupied] = sums[occupied] / counts[occupied]
    return out


def save_scenario(path, deployment, users=None, meta=None):
    """Persist a topology (and optionally users) for exact replay."""
    doc = {
        "intersite_distance": deployment.intersite_distance,
        "sites": np.asarray(deployment.sites).tolist(),
        "cells": [
            {
                "site_xy": list(c.site_xy),
                "azimuth_deg": c.azimuth_deg,
                "height_m": c.height_m,
                "tilt_deg": c.tilt_deg,
                "power_w": c.power_w,
            }
            for c in deployment.cells
        ],
        "meta": meta or {},
    }
    if users is not None:
        doc["users"] = {
            "positions": np.asarray(users.positions).tolist(),
            "attachment": None if users.attachment is None
            else np.asarray(users.attachment).tolist(),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)


def load_scenario(path):
    with open(path) as fh:
        doc = json.load(fh)
    cells = [AntennaConfig(
        site_xy=tuple(c["site_xy"]),
        azimuth_deg=c["azimuth_deg"],
        height_m=c["height_m"],
        tilt_deg=c["tilt_deg"],
        power_w=c["power_w"],
    ) for c in doc["cells"]]
    deployment = Deployment(
        sites=np.array(doc["sites"]),
        cells=cells,
        intersite_distance=doc["intersite_distance"],
    )
    users = None
    if "users" in doc:
        att = doc["users"]["attachment"]
        users = UserPopulation(
            positions=np.array(doc["users"]["positions"]),
            attachment=None if att is None else np.array(att, dtype=np.intp),
        )
    return deployment, users, doc.get("meta", {})
