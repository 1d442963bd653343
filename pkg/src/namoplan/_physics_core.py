"""Numba kernels for the quasi-static pushing simulator.

Everything here operates on packed float64/int64 arrays so the same code
drives single steps, rollouts and parallel rollout batches.  Keeping one
dynamics code path is what makes batch results bit-identical to serial
step sequences regardless of thread count.
"""

import math

import numpy as np
from numba import njit, prange

MAX_POLY = 32            # scratch size for world-frame vertex buffers
RESOLVE_ITERS = 12       # contact resolution passes per substep
PUSH_SLACK = 1e-9        # separation left after resolving a contact, meters
CHAIN_LIMIT = 3          # max obstacles in one push chain
SUBSTEP_CAP = 0.05       # max robot displacement per substep, meters


@njit(cache=True, nogil=True)
def _wrap_angle(a):
    """Map an angle into (-pi, pi]."""
    a = (a + math.pi) % (2.0 * math.pi) - math.pi
    if a == -math.pi:
        a = math.pi
    return a


@njit(cache=True, nogil=True)
def _world_verts(local, x, y, th, out):
    c = math.cos(th)
    s = math.sin(th)
    n = local.shape[0]
    for k in range(n):
        out[k, 0] = c * local[k, 0] - s * local[k, 1] + x
        out[k, 1] = s * local[k, 0] + c * local[k, 1] + y
    return n


@njit(cache=True, nogil=True)
def _sat_mtv(A, na, B, nb):
    """Minimum translation vector between convex polygons.

    Returns (depth, nx, ny) with the unit axis oriented to push B away
    from A.  depth <= 0 means the polygons are separated.
    """
    best = 1.0e18
    bnx = 0.0
    bny = 0.0
    acx = 0.0
    acy = 0.0
    for k in range(na):
        acx += A[k, 0]
        acy += A[k, 1]
    acx /= na
    acy /= na
    bcx = 0.0
    bcy = 0.0
    for k in range(nb):
        bcx += B[k, 0]
        bcy += B[k, 1]
    bcx /= nb
    bcy /= nb

    for src in range(2):
        n_edges = na if src == 0 else nb
        for k in range(n_edges):
            if src == 0:
                x0, y0 = A[k, 0], A[k, 1]
                x1, y1 = A[(k + 1) % na, 0], A[(k + 1) % na, 1]
            else:
                x0, y0 = B[k, 0], B[k, 1]
                x1, y1 = B[(k + 1) % nb, 0], B[(k + 1) % nb, 1]
            ex = x1 - x0
            ey = y1 - y0
            ln = math.sqrt(ex * ex + ey * ey)
            if ln < 1e-15:
                continue
            ax = ey / ln
            ay = -ex / ln
            min_a = 1.0e18
            max_a = -1.0e18
            for m in range(na):
                p = ax * A[m, 0] + ay * A[m, 1]
                if p < min_a:
                    min_a = p
                if p > max_a:
                    max_a = p
            min_b = 1.0e18
            max_b = -1.0e18
            for m in range(nb):
                p = ax * B[m, 0] + ay * B[m, 1]
                if p < min_b:
                    min_b = p
                if p > max_b:
                    max_b = p
            overlap = min(max_a, max_b) - max(min_a, min_b)
            if overlap <= 0.0:
                return 0.0, 0.0, 0.0
            if overlap < best:
                best = overlap
                if ax * (bcx - acx) + ay * (bcy - acy) >= 0.0:
                    bnx, bny = ax, ay
                else:
                    bnx, bny = -ax, -ay
    return best, bnx, bny


@njit(cache=True, nogil=True)
def _clip_centroid(A, na, B, nb, work1, work2):
    """Centroid of the intersection polygon (Sutherland-Hodgman clip of A by B).

    Falls back to the mean of surviving points when the intersection is
    degenerate (touching contact).  Returns (cx, cy, ok).
    """
    cur = work1
    nxt = work2
    n_cur = na
    for k in range(na):
        cur[k, 0] = A[k, 0]
        cur[k, 1] = A[k, 1]
    for e in range(nb):
        x0, y0 = B[e, 0], B[e, 1]
        x1, y1 = B[(e + 1) % nb, 0], B[(e + 1) % nb, 1]
        ex = x1 - x0
        ey = y1 - y0
        n_nxt = 0
        for k in range(n_cur):
            px, py = cur[k, 0], cur[k, 1]
            qx, qy = cur[(k + 1) % n_cur, 0], cur[(k + 1) % n_cur, 1]
            side_p = ex * (py - y0) - ey * (px - x0)
            side_q = ex * (qy - y0) - ey * (qx - x0)
            if side_p >= -1e-12:
                if n_nxt < MAX_POLY:
                    nxt[n_nxt, 0] = px
                    nxt[n_nxt, 1] = py
                    n_nxt += 1
            if (side_p > 1e-12 and side_q < -1e-12) or (side_p < -1e-12 and side_q > 1e-12):
                t = side_p / (side_p - side_q)
                if n_nxt < MAX_POLY:
                    nxt[n_nxt, 0] = px + t * (qx - px)
                    nxt[n_nxt, 1] = py + t * (qy - py)
                    n_nxt += 1
        tmp = cur
        cur = nxt
        nxt = tmp
        n_cur = n_nxt
        if n_cur == 0:
            return 0.0, 0.0, False
    # area-weighted centroid, mean fallback for slivers
    a2 = 0.0
    cx = 0.0
    cy = 0.0
    for k in range(n_cur):
        x0, y0 = cur[k, 0], cur[k, 1]
        x1, y1 = cur[(k + 1) % n_cur, 0], cur[(k + 1) % n_cur, 1]
        w = x0 * y1 - x1 * y0
        a2 += w
        cx += (x0 + x1) * w
        cy += (y0 + y1) * w
    if abs(a2) > 1e-12:
        return cx / (3.0 * a2), cy / (3.0 * a2), True
    mx = 0.0
    my = 0.0
    for k in range(n_cur):
        mx += cur[k, 0]
        my += cur[k, 1]
    return mx / n_cur, my / n_cur, True


@njit(cache=True, nogil=True)
def _obstacle_world(ov, optr, p, poses, buf):
    lo = optr[p]
    hi = optr[p + 1]
    c = math.cos(poses[p, 2])
    s = math.sin(poses[p, 2])
    for k in range(hi - lo):
        lx = ov[lo + k, 0]
        ly = ov[lo + k, 1]
        buf[k, 0] = c * lx - s * ly + poses[p, 0]
        buf[k, 1] = s * lx + c * ly + poses[p, 1]
    return hi - lo


@njit(cache=True, nogil=True)
def _move_obstacle(poses, oc, p, dx, dy, dpsi):
    """Translate obstacle p by (dx, dy) and rotate it by dpsi about its centroid."""
    c = math.cos(poses[p, 2])
    s = math.sin(poses[p, 2])
    cwx = c * oc[p, 0] - s * oc[p, 1] + poses[p, 0]
    cwy = s * oc[p, 0] + c * oc[p, 1] + poses[p, 1]
    th2 = _wrap_angle(poses[p, 2] + dpsi)
    c2 = math.cos(th2)
    s2 = math.sin(th2)
    poses[p, 0] = cwx + dx - (c2 * oc[p, 0] - s2 * oc[p, 1])
    poses[p, 1] = cwy + dy - (s2 * oc[p, 0] + c2 * oc[p, 1])
    poses[p, 2] = th2


@njit(cache=True, nogil=True)
def _push_chain(poses, ov, optr, oc, obr, pushable, p0, nx, ny, dist, dpsi,
                bufA, bufB):
    """Move obstacle p0 and propagate obstacle-obstacle contacts.

    Chain links beyond the first translate without rotation.  Returns False
    (blocked) if any link is unpushable or more than CHAIN_LIMIT obstacles
    would move; the caller restores poses from its snapshot in that case.
    """
    n_obs = poses.shape[0]
    moved = np.empty(CHAIN_LIMIT, dtype=np.int64)
    _move_obstacle(poses, oc, p0, nx * dist, ny * dist, dpsi)
    moved[0] = p0
    n_moved = 1
    for _ in range(16):
        # deepest contact between any moved obstacle and any other obstacle
        best_d = 0.0
        best_src = -1
        best_q = -1
        bnx = 0.0
        bny = 0.0
        for mi in range(n_moved):
            p = moved[mi]
            na = _obstacle_world(ov, optr, p, poses, bufA)
            for q in range(n_obs):
                if q == p:
                    continue
                dxc = poses[q, 0] - poses[p, 0]
                dyc = poses[q, 1] - poses[p, 1]
                if math.sqrt(dxc * dxc + dyc * dyc) > obr[p] + obr[q] + 0.1:
                    continue
                nb = _obstacle_world(ov, optr, q, poses, bufB)
                d, cnx, cny = _sat_mtv(bufA, na, bufB, nb)
                if d > best_d + 1e-15:
                    best_d = d
                    best_src = p
                    best_q = q
                    bnx = cnx
                    bny = cny
        if best_q < 0:
            return True
        if not pushable[best_q]:
            return False
        already = False
        for mi in range(n_moved):
            if moved[mi] == best_q:
                already = True
        if not already:
            if n_moved >= CHAIN_LIMIT:
                return False
            moved[n_moved] = best_q
            n_moved += 1
        _move_obstacle(poses, oc, best_q, bnx * (best_d + PUSH_SLACK),
                       bny * (best_d + PUSH_SLACK), 0.0)
    return False


@njit(cache=True, nogil=True)
def _substep(rp, poses, rv, ov, optr, oc, orho, obr, freq, pushable,
             f_max, k_pen, rbound, force_acc, cpt, cpt_set,
             bufR, bufO, work1, work2, snapshot):
    """Resolve all contacts after the robot has been advanced one substep.

    force_acc accumulates per-obstacle contact force for this substep; cpt
    stores the latest contact point per obstacle.  Returns the largest
    unresolved penetration against an unpushable obstacle (feasibility
    signal; ~0 in normal operation thanks to the final hard guard).
    """
    n_obs = poses.shape[0]
    start_x = rp[0]
    start_y = rp[1]
    start_t = rp[2]
    for _ in range(RESOLVE_ITERS):
        nr = _world_verts(rv, rp[0], rp[1], rp[2], bufR)
        best_d = 1e-9
        best_p = -1
        bnx = 0.0
        bny = 0.0
        for p in range(n_obs):
            dxc = poses[p, 0] - rp[0]
            dyc = poses[p, 1] - rp[1]
            if math.sqrt(dxc * dxc + dyc * dyc) > rbound + obr[p] + 0.05:
                continue
            nb = _obstacle_world(ov, optr, p, poses, bufO)
            d, cnx, cny = _sat_mtv(bufR, nr, bufO, nb)
            if d > best_d + 1e-15:
                best_d = d
                best_p = p
                bnx = cnx
                bny = cny
        if best_p < 0:
            break
        p = best_p
        if pushable[p]:
            nb = _obstacle_world(ov, optr, p, poses, bufO)
            ccx, ccy, ok = _clip_centroid(bufR, nr, bufO, nb, work1, work2)
            dpsi = 0.0
            if ok and orho[p] > 1e-9:
                c = math.cos(poses[p, 2])
                s = math.sin(poses[p, 2])
                cwx = c * oc[p, 0] - s * oc[p, 1] + poses[p, 0]
                cwy = s * oc[p, 0] + c * oc[p, 1] + poses[p, 1]
                lever = (ccx - cwx) * bny - (ccy - cwy) * bnx
                dpsi = lever * best_d / (orho[p] * orho[p])
                if dpsi > 0.3:
                    dpsi = 0.3
                elif dpsi < -0.3:
                    dpsi = -0.3
            for q in range(n_obs):
                snapshot[q, 0] = poses[q, 0]
                snapshot[q, 1] = poses[q, 1]
                snapshot[q, 2] = poses[q, 2]
            ok_push = _push_chain(poses, ov, optr, oc, obr, pushable, p,
                                  bnx, bny, best_d + PUSH_SLACK, dpsi,
                                  bufO, work1)
            if ok_push:
                if force_acc[p] < freq[p]:
                    force_acc[p] = freq[p]
                cpt[p, 0] = ccx
                cpt[p, 1] = ccy
                cpt_set[p] = True
                continue
            for q in range(n_obs):
                poses[q, 0] = snapshot[q, 0]
                poses[q, 1] = snapshot[q, 1]
                poses[q, 2] = snapshot[q, 2]
        # blocked: cancel the robot's motion along the contact normal
        rp[0] -= bnx * (best_d + PUSH_SLACK)
        rp[1] -= bny * (best_d + PUSH_SLACK)
        if force_acc[p] < f_max:
            force_acc[p] = f_max
        nb = _obstacle_world(ov, optr, p, poses, bufO)
        ccx, ccy, ok = _clip_centroid(bufR, nr, bufO, nb, work1, work2)
        if ok:
            cpt[p, 0] = ccx
            cpt[p, 1] = ccy
            cpt_set[p] = True

    # hard guard: the robot must never stay inside an unpushable obstacle
    worst = 0.0
    cleared = False
    for _ in range(8):
        nr = _world_verts(rv, rp[0], rp[1], rp[2], bufR)
        deepest = 0.0
        dp = -1
        dnx = 0.0
        dny = 0.0
        for p in range(n_obs):
            if pushable[p]:
                continue
            dxc = poses[p, 0] - rp[0]
            dyc = poses[p, 1] - rp[1]
            if math.sqrt(dxc * dxc + dyc * dyc) > rbound + obr[p] + 0.05:
                continue
            nb = _obstacle_world(ov, optr, p, poses, bufO)
            d, cnx, cny = _sat_mtv(bufR, nr, bufO, nb)
            if d > deepest + 1e-15:
                deepest = d
                dp = p
                dnx = cnx
                dny = cny
        if dp < 0:
            cleared = True
            break
        if deepest > worst:
            worst = deepest
        rp[0] -= dnx * (deepest + PUSH_SLACK)
        rp[1] -= dny * (deepest + PUSH_SLACK)
    if not cleared:
        # pathological wedge: give up on this substep's motion entirely
        rp[0] = start_x
        rp[1] = start_y
        rp[2] = start_t
        # residual penalty on whatever still overlaps the reverted pose
        nr = _world_verts(rv, rp[0], rp[1], rp[2], bufR)
        worst = 0.0
        for p in range(n_obs):
            if pushable[p]:
                continue
            nb = _obstacle_world(ov, optr, p, poses, bufO)
            d, cnx, cny = _sat_mtv(bufR, nr, bufO, nb)
            if d > 1e-12:
                force_acc[p] += k_pen * d
                if d > worst:
                    worst = d
    return worst


@njit(cache=True, nogil=True)
def _rollout_core(rp0, poses0, controls, dt, rv, ov, optr, oc, orho, obr,
                  freq, pushable, f_max, k_pen, u_max, rbound, room_w, room_l,
                  store_obs, poses_out, vels_out, forces_out, obs_forces_out,
                  cpts_out, obs_traj_out, viol_out):
    """Simulate T control steps from (rp0, poses0); outputs are per-step.

    viol_out[0] collects the worst constraint violation over the horizon
    (unpushable penetration or leaving the room).  All buffers are caller
    allocated so the batch kernel can hand out per-rollout slices.
    """
    T = controls.shape[0]
    n_obs = poses0.shape[0]
    rp = np.empty(3)
    rp[0] = rp0[0]
    rp[1] = rp0[1]
    rp[2] = rp0[2]
    poses = np.empty((n_obs, 3))
    for p in range(n_obs):
        poses[p, 0] = poses0[p, 0]
        poses[p, 1] = poses0[p, 1]
        poses[p, 2] = poses0[p, 2]
    bufR = np.empty((MAX_POLY, 2))
    bufO = np.empty((MAX_POLY, 2))
    work1 = np.empty((MAX_POLY, 2))
    work2 = np.empty((MAX_POLY, 2))
    snapshot = np.empty((n_obs, 3))
    force_sub = np.empty(n_obs)
    force_step = np.empty(n_obs)
    cpt = np.empty((n_obs, 2))
    cpt_set = np.zeros(n_obs, dtype=np.bool_)
    viol = 0.0

    for t in range(T):
        vx = controls[t, 0]
        vy = controls[t, 1]
        om = controls[t, 2]
        if vx > u_max[0]:
            vx = u_max[0]
        elif vx < -u_max[0]:
            vx = -u_max[0]
        if vy > u_max[1]:
            vy = u_max[1]
        elif vy < -u_max[1]:
            vy = -u_max[1]
        if om > u_max[2]:
            om = u_max[2]
        elif om < -u_max[2]:
            om = -u_max[2]

        disp = math.sqrt(vx * vx + vy * vy) * dt + abs(om) * dt * rbound
        n_sub = int(math.ceil(disp / SUBSTEP_CAP - 1e-12))
        if n_sub < 1:
            n_sub = 1
        dt_sub = dt / n_sub

        px = rp[0]
        py = rp[1]
        pt = rp[2]
        for p in range(n_obs):
            force_step[p] = 0.0
            cpt_set[p] = False

        for _ in range(n_sub):
            rp[0] += vx * dt_sub
            rp[1] += vy * dt_sub
            rp[2] = _wrap_angle(rp[2] + om * dt_sub)
            for p in range(n_obs):
                force_sub[p] = 0.0
            w = _substep(rp, poses, rv, ov, optr, oc, orho, obr, freq,
                         pushable, f_max, k_pen, rbound, force_sub, cpt,
                         cpt_set, bufR, bufO, work1, work2, snapshot)
            if w > viol:
                viol = w
            for p in range(n_obs):
                force_step[p] += force_sub[p]

        if rp[0] < 0.0 or rp[0] > room_w or rp[1] < 0.0 or rp[1] > room_l:
            if 1.0 > viol:
                viol = 1.0

        total = 0.0
        for p in range(n_obs):
            f = force_step[p] / n_sub
            obs_forces_out[t, p] = f
            cpts_out[t, p, 0] = cpt[p, 0] if cpt_set[p] else 0.0
            cpts_out[t, p, 1] = cpt[p, 1] if cpt_set[p] else 0.0
            total += f
        forces_out[t] = total
        poses_out[t, 0] = rp[0]
        poses_out[t, 1] = rp[1]
        poses_out[t, 2] = rp[2]
        vels_out[t, 0] = (rp[0] - px) / dt
        vels_out[t, 1] = (rp[1] - py) / dt
        vels_out[t, 2] = _wrap_angle(rp[2] - pt) / dt
        if store_obs:
            for p in range(n_obs):
                obs_traj_out[t, p, 0] = poses[p, 0]
                obs_traj_out[t, p, 1] = poses[p, 1]
                obs_traj_out[t, p, 2] = poses[p, 2]
    viol_out[0] = viol
    if not store_obs:
        # final obstacle poses still useful to callers (single-slot)
        for p in range(n_obs):
            obs_traj_out[0, p, 0] = poses[p, 0]
            obs_traj_out[0, p, 1] = poses[p, 1]
            obs_traj_out[0, p, 2] = poses[p, 2]


@njit(cache=True, nogil=True, parallel=True)
def _batch_core(rp0, poses0, controls, dt, rv, ov, optr, oc, orho, obr,
                freq, pushable, f_max, k_pen, u_max, rbound, room_w, room_l,
                store_obs, poses_out, vels_out, forces_out, obs_forces_out,
                cpts_out, obs_traj_out, viol_out):
    """K independent rollouts; each index works on private state, so results
    do not depend on the thread count or schedule."""
    K = controls.shape[0]
    for k in prange(K):
        _rollout_core(rp0, poses0, controls[k], dt, rv, ov, optr, oc, orho,
                      obr, freq, pushable, f_max, k_pen, u_max, rbound,
                      room_w, room_l, store_obs, poses_out[k], vels_out[k],
                      forces_out[k], obs_forces_out[k], cpts_out[k],
                      obs_traj_out[k], viol_out[k])
