"""
Link prediction with filtered ranking
=====================================

Score every candidate head and tail against each test triple, rank the
true entity, and aggregate MR, MRR, and Hits@k.  Filtering removes other
known-true triples from the candidate list before ranking.
"""
from pathlib import Path

from dkge import TrainConfig, evaluate, load_snapshot_dir, train_from_scratch
from dkge.evaluation import HEAD, TAIL, rank_entity

data = Path(__file__).parent / "data"
sd = load_snapshot_dir(data / "t2")

config = TrainConfig(dim=16, learning_rate=0.02, batch_size=8, margin=2.0,
                     max_epochs=60, eval_every=10, patience=3, seed=7)
store, _ = train_from_scratch(sd.train, set(), config, log=None)

# one query at a time: rank the true tail of (e6, r5, ?) among all
# entities, hiding the other training triples from the candidate list
triple = sd.train.resolve(("e6", "r5", "e3"))
res = rank_entity((TAIL, triple), store, sd.train, sd.train.triple_set)
print("tail rank of (e6, r5, e3):", res.rank)
res = rank_entity((HEAD, triple), store, sd.train, sd.train.triple_set)
print("head rank of (e6, r5, e3):", res.rank)

# the full harness runs both directions of every test triple; metrics
# average over all queries, and triples naming unknown objects are skipped
metrics = evaluate(list(sd.test), store, sd.train, sd.train.triple_set)
print("\nMR  :", round(metrics.mr, 4))
print("MRR :", round(metrics.mrr, 4))
for k in (1, 3, 10):
    print(f"Hits@{k}:", round(metrics.hits_at[k], 4))
print("queries:", metrics.queries, "skipped:", metrics.skipped)

# raw ranking treats ties optimistically (best rank among equals); the
# pessimistic mode counts every tied candidate ahead of the true one
pes = evaluate(list(sd.test), store, sd.train, sd.train.triple_set,
               tie_mode="pessimistic")
print("pessimistic MRR:", round(pes.mrr, 4))
