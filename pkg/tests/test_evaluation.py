import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inmo.backbones import mf_forward
from inmo.data import (
    InductiveScenario,
    InteractionDataset,
    make_new_users_items_scenario,
    split_per_user,
    synthetic_block_dataset,
)
from inmo.evaluation import (
    EvalReport,
    GroupMetrics,
    PopularRanker,
    as_percent,
    evaluate,
    evaluate_scenario,
    recall_precision_ndcg,
)


def test_single_target_at_rank_two():
    r, p, n = recall_precision_ndcg([5, 7, 9], [7], k=3)
    assert r == 1.0 and p == pytest.approx(1 / 3, abs=1e-15)
    assert abs(n - 1 / math.log2(3)) <= 1e-12


def test_hand_cases():
    # targets {1, 2, 3}; hits at ranks 1 and 3 of k = 4
    r, p, n = recall_precision_ndcg([1, 9, 3, 8], [1, 2, 3], k=4)
    assert r == pytest.approx(2 / 3) and p == 0.5
    assert n == pytest.approx((1 + 1 / 2) / (1 + 1 / math.log2(3) + 1 / 2), abs=1e-12)
    assert recall_precision_ndcg([4, 5], [1], k=2) == (0.0, 0.0, 0.0)
    # ideal DCG stops at k when there are more targets than slots
    assert recall_precision_ndcg([1, 2], [1, 2, 3, 4], k=2)[2] == pytest.approx(1.0)
    # only the first k entries count
    assert recall_precision_ndcg([0, 1, 2], [2], k=2) == (0.0, 0.0, 0.0)


def test_metric_errors():
    with pytest.raises(ValueError):
        recall_precision_ndcg([1], [], k=1)
    with pytest.raises(ValueError):
        recall_precision_ndcg([1, 1], [1], k=2)
    with pytest.raises(ValueError):
        recall_precision_ndcg([1], [1], k=0)


@given(st.permutations(list(range(12))), st.sets(st.integers(0, 11), min_size=1), st.integers(1, 12))
def test_metric_ranges(ranked, targets, k):
    r, p, n = recall_precision_ndcg(ranked, targets, k)
    assert 0 <= r <= 1 and 0 <= p <= 1 and 0 <= n <= 1 + 1e-12
    ideal = sorted(targets) + [x for x in ranked if x not in targets]
    assert recall_precision_ndcg(ideal, targets, k)[2] == pytest.approx(1.0)


def test_percent_display():
    assert as_percent(0.2017) == "20.17"
    assert as_percent(0.201749) == "20.17"
    assert as_percent(0.05) == "5.00"
    rep = EvalReport("transductive", 20, {"all": GroupMetrics(0.2017, 0.0612, 0.1721, 10)})
    assert rep.csv_rows()[1] == ["transductive", "Over All", "20", "20.17", "6.12", "17.21", "10"]
    assert "recall 20.17" in rep.format()


def test_evaluate_skips_users_without_targets_and_excludes_seen():
    reps = mf_forward(np.eye(3), np.eye(3))  # user u prefers item u
    targets = InteractionDataset.from_edges(3, 3, [0, 1], [0, 2])
    seen = InteractionDataset.from_edges(3, 3, [1], [1])
    g = evaluate(reps, targets, seen, k=1)
    assert g.n_users == 2
    # user 0 hits item 0; user 1's favourite is excluded, tie 0 vs 2 goes to 0: miss
    assert g.recall == 0.5 and g.ndcg == 0.5
    g2 = evaluate(reps, targets, seen, k=2)
    assert g2.per_user[1].tolist() == [1.0, 0.5, 1 / math.log2(3)]
    assert evaluate(reps, targets, None, k=1, target_items=[2]).n_users == 1


def test_popular_ranker():
    train = InteractionDataset.from_edges(3, 3, [0, 1, 2, 1], [2, 2, 2, 0])
    pop = PopularRanker(train)
    assert pop.ranking().tolist() == [2, 0, 1]
    assert pop.scores([0, 1]).shape == (2, 3)


def test_scenario_report_groups(tmp_path):
    split = split_per_user(synthetic_block_dataset(n_users=50, n_items=40, mean_degree=10, seed=1), seed=1)
    sc = make_new_users_items_scenario(split, seed=1)
    rep = evaluate_scenario(PopularRanker(sc.train_view), sc, k=5)
    assert set(rep.groups) == {"all", "new_user", "new_item"}
    assert rep["new_item"].recall == 0.0  # new items have no training degree
    rep.save_csv(tmp_path / "r.csv")
    text = (tmp_path / "r.csv").read_text()
    assert "Over All" in text and "New User" in text and "New Item" in text
    rep.save_json(tmp_path / "r.json")
    tr = evaluate_scenario(PopularRanker(split.train), InductiveScenario.transductive(split), k=5)
    assert set(tr.groups) == {"all"} and tr.scenario == "transductive"
