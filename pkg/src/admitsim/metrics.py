"""Controller performance metrics computed from run logs.

Every metric is a pure function of the log (rows plus metadata), so a
reloaded log yields bit-identical numbers to the in-memory one. Deviation
means the Cartesian position error ||x - x_d|| unless stated otherwise;
"release" is the end of the last scripted force segment, taken from the
logged applied wrench.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np
from scipy.signal import butter, filtfilt

from .admittance import AdmittanceParams, _zoh_matrices
from .runlog import RunLog

RECOVERY_BAND = 1e-3      # m
RECOVERY_HOLD = 0.5       # s the deviation must stay inside the band
SETTLING_FRACTION = 0.02  # of the post-release peak deviation
JERK_LOWPASS_HZ = 20.0


@dataclass
class MetricsReport:
    force_tracking_rmse_n: float
    max_deviation_cm: float
    recovery_time_s: float
    settling_time_s: float
    damping_ratio: float
    damping_oscillatory: bool
    energy_dissipated_j: float
    velocity_overshoot_pct: float
    peak_jerk_m_s3: float
    effort_reduction_pct: float
    effort_baseline: str

    def to_dict(self):
        return asdict(self)

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    @staticmethod
    def from_dict(d) -> "MetricsReport":
        return MetricsReport(**d)

    def table(self) -> str:
        rows = [
            ("Force Tracking Error (RMSE) (N)", f"{self.force_tracking_rmse_n:.6g}"),
            ("Maximum Trajectory Deviation (cm)", f"{self.max_deviation_cm:.6g}"),
            ("Recovery Time (s)", f"{self.recovery_time_s:.6g}"),
            ("Settling Time (s)", f"{self.settling_time_s:.6g}"),
            ("Damping Ratio", f"{self.damping_ratio:.6g}"
             + ("" if self.damping_oscillatory else " (non-oscillatory)")),
            ("Energy Dissipation (J)", f"{self.energy_dissipated_j:.6g}"),
            ("Velocity Overshoot (%)", f"{self.velocity_overshoot_pct:.6g}"),
            ("Peak Jerk (m/s^3)", f"{self.peak_jerk_m_s3:.6g}"),
            ("Human Effort Reduction (%)", f"{self.effort_reduction_pct:.6g}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def _admittance_params(log: RunLog) -> AdmittanceParams:
    a = log.meta["scenario"]["admittance"]
    return AdmittanceParams(mass=tuple(a["mass"]), damping=tuple(a["damping"]),
                            stiffness=tuple(a["stiffness"]),
                            axis_mask=tuple(bool(b) for b in a["axis_mask"]),
                            force_deadband=a["force_deadband"],
                            offset_limit=tuple(a["offset_limit"]),
                            integrator=a.get("integrator", "exact"))


def deviation(log: RunLog):
    """||x - x_d|| per tick (position part, meters)."""
    return np.linalg.norm(log.group("ee")[:, :3] - log.group("xd")[:, :3], axis=1)


def release_index(log: RunLog):
    """Index of the first tick after the last applied force; 0 when unforced."""
    forced = np.flatnonzero(np.linalg.norm(log.group("fext"), axis=1) > 0)
    if forced.size == 0:
        return 0
    return min(int(forced[-1]) + 1, len(log) - 1)


def metric_force_tracking_rmse(log: RunLog) -> float:
    """RMSE of F_ext - (M dxddot + B dxdot + K dx) over enabled axes.

    The offset acceleration comes from central differences of the logged
    offset rate, so this measures how faithfully the integrated states obey
    the virtual dynamics. Empty or 2-row logs return 0.
    """
    if len(log) < 3:
        return 0.0
    params = _admittance_params(log)
    mask = params.mask_vec()
    dt = log.dt
    f = log.group("fext")[:, mask]
    dx = log.group("dx")[:, mask]
    dv = log.group("dxdot")[:, mask]
    acc = (dv[2:] - dv[:-2]) / (2.0 * dt)
    m = params.mass_vec()[mask]
    b = params.damping_vec()[mask]
    k = params.stiffness_vec()[mask]
    f_model = m * acc + b * dv[1:-1] + k * dx[1:-1]
    err = f[1:-1] - f_model
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def metric_max_deviation(log: RunLog) -> float:
    """Maximum trajectory deviation in centimeters."""
    if len(log) == 0:
        return 0.0
    return float(np.max(deviation(log)) * 100.0)


def _first_sustained_entry(dev, start, band, hold_ticks):
    """First index >= start where dev stays < band for hold_ticks in a row."""
    below = dev[start:] < band
    run = 0
    for i, ok in enumerate(below):
        run = run + 1 if ok else 0
        if run >= hold_ticks:
            return start + i - hold_ticks + 1
    return None


def metric_recovery_time(log: RunLog, band=RECOVERY_BAND) -> float:
    """Seconds from force release until the deviation stays under `band`.

    The deviation must remain inside the band for 0.5 s; returns 0 for
    unforced runs and inf when the log never recovers.
    """
    if len(log) == 0:
        return 0.0
    rel = release_index(log)
    if rel == 0:
        return 0.0
    dev = deviation(log)
    hold = max(1, int(round(RECOVERY_HOLD / log.dt)))
    hold = min(hold, max(1, len(log) - rel - 1))
    entry = _first_sustained_entry(dev, rel, band, hold)
    if entry is None:
        return float("inf")
    return float(log.t[entry] - log.t[rel])


def metric_settling_time(log: RunLog) -> float:
    """2% settling of the post-release deviation transient."""
    if len(log) == 0:
        return 0.0
    rel = release_index(log)
    if rel == 0:
        return 0.0
    dev = deviation(log)
    peak = np.max(dev[rel:])
    if peak <= 0:
        return 0.0
    band = SETTLING_FRACTION * peak
    above = np.flatnonzero(dev[rel:] > band)
    if above.size == 0:
        return 0.0
    return float(log.t[rel + above[-1] + 1] - log.t[rel]) if rel + above[-1] + 1 < len(log) else float("inf")


def _rectified_peaks(signal):
    """Indices of strict local maxima of a non-negative signal."""
    s = signal
    idx = [i for i in range(1, len(s) - 1)
           if s[i] > s[i - 1] and s[i] >= s[i + 1]]
    # Drop numerical-noise peaks under 1% of the series maximum.
    floor = 0.01 * np.max(s) if len(s) else 0.0
    return [i for i in idx if s[i] > floor]


def metric_damping_ratio(log: RunLog):
    """(zeta, oscillatory) from the log decrement of successive |dev| peaks.

    Successive rectified peaks are half a period apart, so the per-pair
    decrement L = ln(p_k / p_{k+1}) maps to zeta = L / sqrt(pi^2 + L^2).
    Responses with fewer than two usable peaks report (1.0, False).
    """
    if len(log) == 0:
        return 1.0, False
    rel = release_index(log)
    dev = deviation(log)[rel:]
    peaks = _rectified_peaks(dev)
    if len(peaks) < 2:
        return 1.0, False
    ratios = []
    for a, b in zip(peaks, peaks[1:]):
        if dev[b] <= 0:
            continue
        ratios.append(np.log(dev[a] / dev[b]))
    if not ratios:
        return 1.0, False
    L = float(np.mean(ratios))
    if L <= 0:
        return 1.0, False
    zeta = L / np.sqrt(np.pi ** 2 + L ** 2)
    return float(zeta), True


def metric_energy(log: RunLog) -> float:
    """Dissipated energy: injected work minus the virtual energy change.

    Injected work integrates F_ext . xdot over the run with the force held
    over each tick (the zero-order-hold convention the integrator uses), so
    smooth profiles cannot produce spurious negative dissipation.
    """
    if len(log) < 2:
        return 0.0
    params = _admittance_params(log)
    f = log.group("fext")
    x = log.group("ee")[:, :3]
    work = float(np.sum(f[:-1, :3] * (x[1:] - x[:-1])))
    dx = log.group("dx")
    dv = log.group("dxdot")
    m = params.mass_vec()
    k = params.stiffness_vec()
    e0 = 0.5 * np.sum(m * dv[0] ** 2) + 0.5 * np.sum(k * dx[0] ** 2)
    e1 = 0.5 * np.sum(m * dv[-1] ** 2) + 0.5 * np.sum(k * dx[-1] ** 2)
    return work - float(e1 - e0)


def metric_overshoot(log: RunLog) -> float:
    """Velocity overshoot (%) against the commanded profile peak.

    Compares the actual Cartesian speed during unforced ticks with the peak
    commanded-profile speed over those same ticks (finite-differenced from
    the logged x_cmd, which already blends the compliance offset). A
    perfectly tracked profile scores 0; plant lag produces catch-up
    transients that exceed the command.
    """
    if len(log) < 3:
        return 0.0
    dt = log.dt
    xcmd = log.group("xcmd")[:, :3]
    vcmd = np.zeros(len(log))
    vcmd[1:-1] = np.linalg.norm((xcmd[2:] - xcmd[:-2]) / (2 * dt), axis=1)
    vcmd[0], vcmd[-1] = vcmd[1], vcmd[-2]
    unforced = np.linalg.norm(log.group("fext"), axis=1) == 0
    if not np.any(unforced):
        return 0.0
    profile_peak = float(np.max(vcmd[unforced]))
    if profile_peak <= 0:
        return 0.0
    speed = np.linalg.norm(log.group("eedot")[:, :3], axis=1)
    peak = float(np.max(speed[unforced]))
    return max(0.0, (peak - profile_peak) / profile_peak * 100.0)


def metric_peak_jerk(log: RunLog) -> float:
    """Peak ||d3x/dt3|| of the low-passed end-effector position (m/s^3)."""
    if len(log) < 9:
        return 0.0
    dt = log.dt
    x = log.group("ee")[:, :3]
    nyq = 0.5 / dt
    if JERK_LOWPASS_HZ < nyq:
        b, a = butter(2, JERK_LOWPASS_HZ / nyq)
        x = filtfilt(b, a, x, axis=0)
    d3 = (x[3:] - 3 * x[2:-1] + 3 * x[1:-2] - x[:-3]) / dt ** 3
    return float(np.max(np.linalg.norm(d3, axis=1)))


def metric_effort_reduction(params: AdmittanceParams, hold_deviation=0.05,
                            hold_time=1.0, dt=1e-3, sim_time=6.0,
                            stiff_factor=20.0, tol=1e-3):
    """Paired experiment: force needed to hold a y-deviation, soft vs stiff.

    Bisection finds the minimum constant force that keeps |dx_y| at or above
    hold_deviation for a contiguous hold_time window, first with the given
    admittance, then with stiffness scaled by stiff_factor (damping and mass
    unchanged). Returns (reduction_pct, f_soft, f_stiff, description).
    """
    stiff = AdmittanceParams(
        mass=params.mass,
        damping=params.damping,
        stiffness=tuple(k * stiff_factor for k in params.stiffness),
        axis_mask=params.axis_mask,
        force_deadband=params.force_deadband,
        offset_limit=params.offset_limit,
        integrator=params.integrator,
    )

    def holds(p, magnitude):
        # Scalar fast path on the driven y axis (the generic rollout is far
        # too slow inside a bisection loop).
        Ad, Bd = _zoh_matrices(p.mass, p.damping, p.stiffness, p.axis_mask, dt)
        a11, a12, a21, a22 = Ad[1, 0, 0], Ad[1, 0, 1], Ad[1, 1, 0], Ad[1, 1, 1]
        b1, b2 = Bd[1, 0], Bd[1, 1]
        f = -magnitude if magnitude >= p.force_deadband else 0.0
        limit = p.offset_limit[1]
        n = int(round(sim_time / dt))
        need = int(round(hold_time / dt))
        x = v = 0.0
        run = 0
        for _ in range(n):
            x, v = a11 * x + a12 * v + b1 * f, a21 * x + a22 * v + b2 * f
            if abs(x) > limit:
                x = limit if x > 0 else -limit
                v = 0.0
            run = run + 1 if abs(x) >= hold_deviation else 0
            if run >= need:
                return True
        return False

    def minimum_force(p):
        lo, hi = 0.0, 1.0
        while not holds(p, hi):
            hi *= 2.0
            if hi > 1e5:
                return float("inf")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if holds(p, mid):
                hi = mid
            else:
                lo = mid
        return hi

    f_soft = minimum_force(params)
    f_stiff = minimum_force(stiff)
    reduction = (f_stiff - f_soft) / f_stiff * 100.0 if f_stiff > 0 else 0.0
    desc = (f"bisection, hold |dx_y| >= {hold_deviation:g} m for {hold_time:g} s; "
            f"stiff baseline = {stiff_factor:g}x stiffness")
    return reduction, f_soft, f_stiff, desc


def compute_report(log: RunLog) -> MetricsReport:
    zeta, oscillatory = metric_damping_ratio(log)
    params = _admittance_params(log)
    reduction, _, _, desc = metric_effort_reduction(params)
    return MetricsReport(
        force_tracking_rmse_n=metric_force_tracking_rmse(log),
        max_deviation_cm=metric_max_deviation(log),
        recovery_time_s=metric_recovery_time(log),
        settling_time_s=metric_settling_time(log),
        damping_ratio=zeta,
        damping_oscillatory=oscillatory,
        energy_dissipated_j=metric_energy(log),
        velocity_overshoot_pct=metric_overshoot(log),
        peak_jerk_m_s3=metric_peak_jerk(log),
        effort_reduction_pct=reduction,
        effort_baseline=desc,
    )
