"""
Gyro drift against the filtered attitude on a sensor lying still.

A level sensor with a 0.01 rad/s gyro bias is integrated open loop and
through the error-state filter. The open-loop tilt grows without bound;
the filter holds roll and pitch on the accelerometer's gravity reference
and learns the bias.

Run with ``python demos/drift_vs_filter.py``.
"""
import numpy as np

from shoegait.ekf import ekf_run, integrate_gyro
from shoegait.rotations import quat_to_euler, rotate_vector
from shoegait.session import SensorStream

FS = 32.0
SECONDS = 60

rng = np.random.default_rng(0)
n = int(SECONDS * FS)
t = np.arange(n) / FS
accel = np.tile([0.0, 0.0, 9.81], (n, 1)) + rng.normal(0, 0.05, (n, 3))
gyro = np.full((n, 3), 0.01) + rng.normal(0, 0.005, (n, 3))

track = ekf_run(SensorStream(0, t, accel, gyro))
open_loop = integrate_gyro([1.0, 0.0, 0.0, 0.0], gyro, t)


def tilt_deg(q):
    # angle between the sensor z axis and vertical
    return np.degrees(np.arccos(np.clip(rotate_vector(q, [0.0, 0.0, 1.0])[2], -1.0, 1.0)))


print(f"{'t (s)':>6}  {'open-loop tilt':>15}  {'filter roll':>12}  {'filter pitch':>13}")
for second in (1, 5, 10, 20, 30, 45, 59):
    k = int(second * FS)
    e = quat_to_euler(track.quats[k - track.init_window])
    print(f"{second:>6}  {tilt_deg(open_loop[k]):>14.2f}°  {e.roll:>11.3f}°  {e.pitch:>12.3f}°")

print("\nestimated gyro bias after 60 s (rad/s):", np.round(track.biases[-1], 4))
