import time

import numpy as np

from wcnsflow.partition import ZoneSpec, Block
from wcnsflow.fields import BlockField, center_mesh
from wcnsflow import residual as R
from wcnsflow.state import GasModel, conserved_from_primitive
from wcnsflow.timestepping import stage_state, block_dt_bound

H = 5
gas = GasModel()


def wrap_fill(data):
    for a in range(3):
        n = data.shape[1 + a] - 2 * H
        idx = (np.arange(-H, n + H) % n) + H
        data[...] = np.take(data, idx, axis=1 + a)


def wave_w(zone, block, t):
    X, Y, Z = center_mesh(block, zone)
    phase = 2 * np.pi * ((X + Y + Z) - 3.0 * t)
    rho = 1.0 + 0.2 * np.sin(phase)
    nx, ny, nz = block.shape
    w = np.empty((5, nx, ny, nz))
    w[0] = rho
    w[1:4] = 1.0
    w[4] = 1.0
    return w


def residual_of(fld, zone, spacing):
    wrap_fill(fld.data)
    w_ext = R.block_primitives(fld.data, gas)
    lams = tuple(R.block_wavespeed_bound(w_ext, a, gas) for a in range(3))
    return R.block_residual(fld.data, gas, spacing, lams)


def run_wave(n, t_end):
    zone = ZoneSpec(id=0, shape=(n, n, n), spacing=(1.0 / n,) * 3, origin=(0.0, 0.0, 0.0),
                    boundary=("periodic",) * 6)
    block = Block(id=0, zone=0, lo=(0, 0, 0), hi=(n, n, n))
    fld = BlockField.allocate(block)
    fld.interior[...] = conserved_from_primitive(wave_w(zone, block, 0.0), gas)
    spacing = zone.spacing
    h = 1.0 / n
    dt0 = h ** (5.0 / 3.0) / 8.0
    t = 0.0
    steps = 0
    while t < t_end - 1e-15:
        dt = min(dt0, t_end - t)
        q0 = fld.interior.copy()
        cur = q0
        for stage in range(3):
            fld.interior[...] = cur
            r = residual_of(fld, zone, spacing)
            cur = stage_state(stage, dt, q0, cur, r)
        fld.interior[...] = cur
        t += dt
        steps += 1
    w_exact = wave_w(zone, block, t_end)
    rho_num = R.block_primitives(fld.data, gas)[0][H:-H, H:-H, H:-H]
    err = np.sqrt(np.mean((rho_num - w_exact[0]) ** 2))
    return err, steps


# Freestream exactness
n = 16
zone = ZoneSpec(id=0, shape=(n, n, n), spacing=(1.0 / n,) * 3, origin=(0.0, 0.0, 0.0),
                boundary=("periodic",) * 6)
block = Block(id=0, zone=0, lo=(0, 0, 0), hi=(n, n, n))
fld = BlockField.allocate(block)
w = np.empty((5, n, n, n))
w[0] = 1.0
w[1] = 0.3
w[2] = -0.2
w[3] = 0.1
w[4] = 0.7
fld.interior[...] = conserved_from_primitive(w, gas)
q_init = fld.interior.copy()
r = residual_of(fld, zone, zone.spacing)
print("freestream |R|_inf =", np.max(np.abs(r)))

# viscous freestream
gas_v = GasModel(reynolds=500.0)
w_ext = R.block_primitives(fld.data, gas_v)
lams = tuple(R.block_wavespeed_bound(w_ext, a, gas_v) for a in range(3))
rv = R.block_residual(fld.data, gas_v, zone.spacing, lams)
print("viscous freestream |R|_inf =", np.max(np.abs(rv)))

# dt bound example: rest state, h=0.1, cfl=1 -> 0.1/(3 sqrt(1.4))
wr = np.empty((5, 4, 4, 4))
wr[0] = 1.0
wr[1:4] = 0.0
wr[4] = 1.0
print("dt rest =", block_dt_bound(wr, gas, (0.1, 0.1, 0.1)), "expected", 0.1 / (3 * np.sqrt(1.4)))

t0 = time.time()
errs = {}
for n in (16, 32):
    errs[n], steps = run_wave(n, 0.005)
    print(f"n={n}: L2 rho err {errs[n]:.3e} ({steps} steps, {time.time()-t0:.1f}s)")
print("observed order:", np.log2(errs[16] / errs[32]))
