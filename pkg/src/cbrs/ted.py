"""Ordered-tree edit distance with unit costs, plus an exhaustive oracle.

The fast path is the classic keyroot dynamic program over postorder-numbered
trees (insert/delete/relabel, each cost 1). The oracle enumerates every
order- and ancestor-preserving node mapping between the two trees and takes
the cheapest; it exists purely to cross-check the dynamic program on small
trees and shares no code with it.
"""

from __future__ import annotations

from .schema import LabeledTree


def _annotate(root: LabeledTree) -> tuple[list[LabeledTree], list[int]]:
    """Postorder node list and leftmost-leaf-descendant index per node."""
    nodes: list[LabeledTree] = []
    lml: list[int] = []

    def rec(node: LabeledTree) -> int:
        first: int | None = None
        for child in node.children:
            ci = rec(child)
            if first is None:
                first = lml[ci]
        idx = len(nodes)
        nodes.append(node)
        lml.append(first if first is not None else idx)
        return idx

    rec(root)
    return nodes, lml


def _keyroots(lml: list[int]) -> list[int]:
    highest: dict[int, int] = {}
    for i, l in enumerate(lml):
        highest[l] = i
    return sorted(highest.values())


def tree_edit_distance(a: LabeledTree, b: LabeledTree) -> int:
    """Minimum number of unit-cost insertions, deletions, and relabelings."""
    an, al = _annotate(a)
    bn, bl = _annotate(b)
    td = [[0] * len(bn) for _ in range(len(an))]

    for i in _keyroots(al):
        for j in _keyroots(bl):
            m = i - al[i] + 2
            n = j - bl[j] + 2
            ioff = al[i] - 1
            joff = bl[j] - 1
            fd = [[0] * n for _ in range(m)]
            for x in range(1, m):
                fd[x][0] = fd[x - 1][0] + 1
            for y in range(1, n):
                fd[0][y] = fd[0][y - 1] + 1
            for x in range(1, m):
                for y in range(1, n):
                    if al[i] == al[x + ioff] and bl[j] == bl[y + joff]:
                        relabel = 0 if an[x + ioff].label == bn[y + joff].label else 1
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[x - 1][y - 1] + relabel,
                        )
                        td[x + ioff][y + joff] = fd[x][y]
                    else:
                        p = al[x + ioff] - 1 - ioff
                        q = bl[y + joff] - 1 - joff
                        fd[x][y] = min(
                            fd[x - 1][y] + 1,
                            fd[x][y - 1] + 1,
                            fd[p][q] + td[x + ioff][y + joff],
                        )
    return td[-1][-1]


def _preorder(root: LabeledTree) -> tuple[list[str], list[set[int]]]:
    """Preorder labels and, per node, the set of its ancestor indices."""
    labels: list[str] = []
    ancestors: list[set[int]] = []

    def rec(node: LabeledTree, anc: set[int]) -> None:
        idx = len(labels)
        labels.append(node.label)
        ancestors.append(set(anc))
        child_anc = anc | {idx}
        for child in node.children:
            rec(child, child_anc)

    rec(root, set())
    return labels, ancestors


def ted_oracle(a: LabeledTree, b: LabeledTree) -> int:
    """Exhaustive minimum over all valid edit mappings; small trees only.

    A mapping pairs nodes one-to-one preserving both preorder position and
    the ancestor relation; its cost is one per unmapped node on either side
    plus one per mapped pair with differing labels. The minimum over all
    mappings is the edit distance.
    """
    a_labels, a_anc = _preorder(a)
    b_labels, b_anc = _preorder(b)
    na, nb = len(a_labels), len(b_labels)
    best = na + nb  # empty mapping: delete everything, insert everything

    def rec(ai: int, bj_min: int, pairs: list[tuple[int, int]], relabels: int) -> None:
        nonlocal best
        mapped = len(pairs)
        # Even mapping every remaining node for free cannot beat `best`.
        remaining = min(na - ai, nb - bj_min)
        floor = relabels + (na - mapped - remaining) + (nb - mapped - remaining)
        if floor >= best:
            return
        if ai == na:
            cost = relabels + (na - mapped) + (nb - mapped)
            best = min(best, cost)
            return
        rec(ai + 1, bj_min, pairs, relabels)
        for bj in range(bj_min, nb):
            ok = True
            for (pi, pj) in pairs:
                if ((pi in a_anc[ai]) != (pj in b_anc[bj])):
                    ok = False
                    break
            if ok:
                pairs.append((ai, bj))
                rec(ai + 1, bj + 1, pairs, relabels + (a_labels[ai] != b_labels[bj]))
                pairs.pop()

    rec(0, 0, [], 0)
    return best


def random_tree(rng, max_nodes: int, labels: tuple[str, ...] = ("x", "y", "z")) -> LabeledTree:
    """Uniformly-shaped random tree with 1..max_nodes nodes for testing."""
    n = int(rng.integers(1, max_nodes + 1))
    children: list[list[int]] = [[] for _ in range(n)]
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        children[parent].append(i)
    node_labels = [str(rng.choice(labels)) for _ in range(n)]

    def build(i: int) -> LabeledTree:
        return LabeledTree(node_labels[i], tuple(build(c) for c in children[i]))

    return build(0)
