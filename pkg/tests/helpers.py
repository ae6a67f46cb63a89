"""Test-only generators and independent oracles."""
import math
import random

from umrf_forge.umrf import NodeRef, Parameter, UmrfGraph, UmrfNode

NAMES = ["navigation", "scan", "manipulate", "pick", "place", "speak"]


def _random_param(rng):
    kind = rng.choice(["number", "string", "bool", "number-list"])
    if kind == "number":
        v = rng.choice([rng.uniform(-1e3, 1e3), float(rng.randint(-50, 50)), rng.uniform(-1, 1) * 10 ** rng.randint(-8, 20)])
        return Parameter("number", v)
    if kind == "string":
        return Parameter("string", "".join(rng.choice("ab cdé\"\\\n_") for _ in range(rng.randint(0, 8))))
    if kind == "bool":
        return Parameter("bool", rng.random() < 0.5)
    return Parameter("number-list", [rng.uniform(-5, 5) for _ in range(rng.randint(0, 4))])


def random_graph(rng: random.Random, max_nodes: int = 10, allow_cycles: bool = True) -> UmrfGraph:
    """Valid graph: node 0 is the entry, every other node has an earlier parent.

    Optional back edges (never into node 0) make it cyclic.
    """
    n = rng.randint(1, max_nodes)
    refs, counters = [], {}
    for _ in range(n):
        name = rng.choice(NAMES)
        counters[name] = counters.get(name, -1) + rng.randint(1, 3)
        refs.append(NodeRef(name, counters[name]))
    edges = set()
    for j in range(1, n):
        edges.add((rng.randrange(j), j))
        for i in range(j):
            if rng.random() < 0.15:
                edges.add((i, j))
    if allow_cycles and n > 2 and rng.random() < 0.3:
        j = rng.randrange(2, n)
        edges.add((j, rng.randrange(1, j)))
    nodes = []
    for k, ref in enumerate(refs):
        parents = [refs[i] for i, j in sorted(edges) if j == k]
        children = [refs[j] for i, j in sorted(edges) if i == k]
        rng.shuffle(parents)
        nodes.append(
            UmrfNode(
                ref=ref,
                effect=rng.choice(["synchronous", "asynchronous"]),
                input_parameters={f"p{m}": _random_param(rng) for m in range(rng.randint(0, 3))},
                output_parameters={f"o{m}": _random_param(rng) for m in range(rng.randint(0, 1))},
                parents=parents,
                children=children,
            )
        )
    rng.shuffle(nodes)
    return UmrfGraph(f"g{rng.randint(0, 999)}", nodes)


def bleu_oracle(cand, ref, max_n=4, smoothing=False, eps=1e-9):
    """Brute-force BLEU: explicit n-gram lists and pairwise clipping."""
    cand, ref = list(cand), list(ref)
    if not cand:
        return 0.0
    orders = min(max_n, len(cand))
    product = 1.0
    for n in range(1, orders + 1):
        c_grams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
        r_grams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
        matched = 0
        for g in set(c_grams):
            matched += min(c_grams.count(g), r_grams.count(g))
        if matched == 0:
            if not smoothing:
                return 0.0
            matched = eps
        product *= matched / len(c_grams)
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * product ** (1.0 / orders)
