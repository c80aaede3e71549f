"""
Answering (head, relation, ?) questions
=======================================

A trained model completes partial triples: fix a head and a relation,
score every entity as the tail, and read off the best candidates.
"""
from pathlib import Path

from dkge import TrainConfig, answer, load_snapshot_dir, train_from_scratch

data = Path(__file__).parent / "data"
sd = load_snapshot_dir(data / "t2")

config = TrainConfig(dim=16, learning_rate=0.02, batch_size=8, margin=2.0,
                     max_epochs=60, eval_every=10, patience=3, seed=7)
store, _ = train_from_scratch(sd.train, set(), config, log=None)
g = sd.train

# whom does e1 relate to through r1?  the graph says e5 and e2; a good
# model puts them in front.  scores are distances: smaller is better
top = answer(g.entity_id("e1"), g.relation_id("r1"), 5, store, g)
print("e1 --r1--> ?")
for rank, (ent, score) in enumerate(top, start=1):
    marker = "*" if g.has_triple(g.resolve((
        "e1", "r1", g.entity_names[ent]))) else " "
    print(f"  {rank}. {g.entity_names[ent]:3} {score:8.4f} {marker}")

# answers are unfiltered on purpose: known tails stay in the list, which
# is what a completion interface should show
top = answer(g.entity_id("e6"), g.relation_id("r5"), 3, store, g)
print("e6 --r5--> ?")
for rank, (ent, score) in enumerate(top, start=1):
    print(f"  {rank}. {g.entity_names[ent]:3} {score:8.4f}")
