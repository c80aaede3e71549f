"""
Context subgraphs for entities and relations
============================================

Every object gets a context: entities the induced subgraph over their
neighborhood, relations a graph of the one- and two-step relation paths
that connect the same entity pairs.
"""
from pathlib import Path

import numpy as np

from dkge import entity_context, load_snapshot_dir, relation_context
from dkge.contexts import cap_and_pad

data = Path(__file__).parent / "data"
g = load_snapshot_dir(data / "t1").train

# the entity context of e1: e1 itself, its neighbors, and every edge the
# snapshot has between those vertices, including neighbor-neighbor edges
sub = entity_context(g, g.entity_id("e1"))
names = [g.entity_names[v.members[0]] for v in sub.vertices]
print("entity context of e1:", names)
adj = sub.adjacency[:len(sub.vertices), :len(sub.vertices)].astype(int)
print(np.array2string(adj))
for i, j in sorted(sub.edge_set()):
    print(f"  edge {names[i]} - {names[j]}")

# the relation context of r1: vertex 0 is r1, the others are relation
# paths (length 1 or 2) linking at least one head-tail pair of r1
sub = relation_context(g, g.relation_id("r1"))
labels = ["-".join(g.relation_names[m] for m in v.members)
          for v in sub.vertices]
print("\nrelation context of r1:", labels)
for i, j in sorted(sub.edge_set()):
    print(f"  edge {labels[i]} - {labels[j]}")

# contexts are capped and padded before entering the encoder: at most
# `cap` vertices survive (the owner always does) and the adjacency is
# zero-padded to a fixed square size so batches share one shape
rng = np.random.default_rng(0)
sub = cap_and_pad(entity_context(g, g.entity_id("e1")), 3, 8, rng)
kept = [g.entity_names[v.members[0]] for v in sub.vertices]
print("\ncapped to 3 of 5 vertices:", kept)
print("padded adjacency shape:", sub.adjacency.shape)

# the signature hashes the uncapped context by name; equal surroundings
# give equal signatures no matter how the triple file was ordered
print("signature:", hex(sub.signature))
