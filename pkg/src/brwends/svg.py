"""
Planar drawings of balls in a disk: vertices sit on circles by BFS depth,
and each vertex's angular wedge is split among its BFS children in the
cyclic order of generators.
"""

import math

import numpy as np

SECTOR_COLORS = {0: "#d62728", 1: "#1f77b4", 2: "#2ca02c", 3: "#ff7f0e"}


def disk_layout(ball):
    """(x, y) per vertex with |position| = tanh(s d / 2), s chosen so the rim sits at 0.95."""
    pres = ball.presentation
    rank = ball.nbr.shape[1]
    try:
        pos = pres.rotation_positions()
    except ValueError:
        pos = tuple(range(rank))
    inv = pres.inverses
    children = [[] for _ in range(ball.n)]
    for v in range(1, ball.n):
        children[int(ball.parent[v])].append(v)
    # wedge width proportional to the number of leaves below
    weight = np.zeros(ball.n)
    for v in range(ball.n - 1, -1, -1):
        weight[v] = sum(weight[c] for c in children[v]) if children[v] else 1.0
    lo = np.zeros(ball.n)
    hi = np.zeros(ball.n)
    hi[0] = 2 * math.pi
    for v in range(ball.n):
        kids = children[v]
        if not kids:
            continue
        if v == 0:
            key = lambda c: pos[int(ball.parent_gen[c])]
        else:
            back = pos[inv[int(ball.parent_gen[v])]]
            key = lambda c, b=back: (pos[int(ball.parent_gen[c])] - b) % len(pos)
        kids.sort(key=key)
        total = sum(weight[c] for c in kids)
        a = lo[v]
        for c in kids:
            span = (hi[v] - lo[v]) * weight[c] / total
            lo[c], hi[c] = a, a + span
            a += span
    s = 2 * math.atanh(0.95) / max(ball.radius, 1)
    rad = np.tanh(s * ball.dist / 2.0)
    ang = (lo + hi) / 2
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1)


def ball_svg(ball, size=800, sectors=None, highlight=None, highlight_edges=None):
    """SVG text; `sectors` colours vertices by sector code, `highlight` marks vertex indices."""
    xy = disk_layout(ball)
    c = size / 2
    sc = size * 0.48

    def p(i):
        return c + sc * xy[i, 0], c - sc * xy[i, 1]

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<circle cx="{c}" cy="{c}" r="{sc}" fill="none" stroke="#999"/>']
    v, t, w = ball.edges()
    keep = v < w
    for a, b in zip(v[keep].tolist(), w[keep].tolist()):
        x1, y1 = p(a)
        x2, y2 = p(b)
        out.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                   f'stroke="#ccc" stroke-width="0.4"/>')
    for a, b in (highlight_edges or []):
        x1, y1 = p(a)
        x2, y2 = p(b)
        out.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                   f'stroke="#000" stroke-width="1.2"/>')
    hl = set() if highlight is None else set(int(i) for i in highlight)
    for i in range(ball.n):
        x, y = p(i)
        col = "#444" if sectors is None else SECTOR_COLORS[int(sectors[i])]
        r = 2.2 if i in hl else 1.2
        stroke = ' stroke="#000" stroke-width="0.6"' if i in hl else ""
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r}" fill="{col}"{stroke}/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
