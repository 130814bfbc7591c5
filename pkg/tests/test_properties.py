"""Property-based checks of the library's invariants."""

import json
from fractions import Fraction

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from fairlayers.checklist import (
    FAIL,
    NOT_APPLICABLE,
    NOT_SATISFIED,
    PASS,
    SATISFIED,
    UNANSWERED,
    ChecklistResponse,
    ItemResponse,
    dump_definitions,
    evaluate_layer,
    load_definitions,
)
from fairlayers.dataset import dump_csv, group_counts, load_csv, profile
from fairlayers.metrics import MetricValue, evaluate_all
from fairlayers.mitigation import resample, reweigh, weight_plan
from fairlayers.model import ModelConfig, loss_and_gradient, train
from fairlayers.pipeline import category_distribution, drift_check, total_variation
from fairlayers.rating import bias_index, deviation, fairness_score

from conftest import GP, toy
from oracles import all_metrics

QP = GP.swapped()
FAST = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


@st.composite
def datasets(draw, max_n=40, weighted=False, both_groups=True, all_cells=False):
    n = draw(st.integers(4 if all_cells else 2, max_n))
    groups = draw(st.lists(st.sampled_from("PQ"), min_size=n, max_size=n))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    if both_groups:
        assume("P" in groups and "Q" in groups)
    if all_cells:
        assume(all((g, y) in set(zip(groups, labels)) for g in "PQ" for y in (0, 1)))
    weights = None
    if weighted:
        weights = draw(st.lists(st.integers(1, 8), min_size=n, max_size=n))
        weights = [w / 4 for w in weights]
    return toy(groups, labels, weights)


def predictions(n):
    return st.lists(st.integers(0, 1), min_size=n, max_size=n)


# dataset ------------------------------------------------------------------


@FAST
@given(datasets(weighted=True))
def test_group_counts_sum_to_n(d):
    t = group_counts(d, GP)
    assert sum(t.counts.values()) == d.n
    assert abs(sum(t.weighted.values()) - d.weights.sum()) < 1e-9


@FAST
@given(datasets())
def test_profile_base_rate_matches_counts(d):
    a = profile(d, [GP]).attributes[0]
    t = group_counts(d, GP)
    assert a.privileged.base_rate == t.cell("privileged", 1) / t.group_size("privileged")
    assert a.privileged.size + a.unprivileged.size == d.n
    assert 0 <= a.unprivileged.base_rate <= 1


@settings(max_examples=30, deadline=None)
@given(datasets(weighted=True), st.data())
def test_csv_round_trip(tmp_path_factory, d, data):
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    schema = dump_csv(d, path)
    assert load_csv(path, schema) == d


# metrics ------------------------------------------------------------------


@FAST
@given(st.data())
def test_metrics_match_oracle(data):
    d = data.draw(datasets(weighted=True))
    pred = data.draw(predictions(d.n))
    got = evaluate_all(d, [GP], pred).attributes[0]
    want = all_metrics(d.column("G"), d.labels.tolist(), pred, d.weights.tolist())
    for v in got.values:
        if want[v.metric] is None:
            assert v.value is None
        else:
            assert abs(v.value - float(want[v.metric])) <= 1e-12


@FAST
@given(st.data())
def test_swapping_groups(data):
    d = data.draw(datasets())
    pred = data.draw(predictions(d.n))
    a = evaluate_all(d, [GP], pred).attributes[0]
    b = evaluate_all(d, [QP], pred).attributes[0]
    for m in ("SPD", "EOD", "EMOD", "AOD"):
        x, y = a.get(m).value, b.get(m).value
        if x is not None and y is not None:
            assert abs(x + y) <= 1e-12
    x, y = a.get("DI").value, b.get("DI").value
    if x and y:
        assert abs(x * y - 1) <= 1e-12


@FAST
@given(st.data(), st.sampled_from([0.5, 2.0, 3.0, 1024.0]))
def test_weight_scale_invariance(data, c):
    d = data.draw(datasets(weighted=True))
    pred = data.draw(predictions(d.n))
    a = evaluate_all(d, [GP], pred).attributes[0]
    b = evaluate_all(d.with_weights(d.weights * c), [GP], pred).attributes[0]
    for x, y in zip(a.values, b.values):
        assert (x.value is None) == (y.value is None)
        if x.value is not None:
            assert abs(x.value - y.value) <= 1e-12


@FAST
@given(datasets())
def test_perfect_predictor(d):
    model = evaluate_all(d, [GP], d.labels.copy()).attributes[0]
    data = evaluate_all(d, [GP]).attributes[0]
    for m in ("EOD", "EMOD", "AOD"):
        v = model.get(m).value
        assert v is None or v == 0
    assert model.get("SPD").value == data.get("SPD").value
    assert model.get("DI").value == data.get("DI").value


@FAST
@given(st.data())
def test_metric_ranges(data):
    d = data.draw(datasets(weighted=True))
    for v in evaluate_all(d, [GP], data.draw(predictions(d.n))).attributes[0].values:
        if v.value is None:
            continue
        if v.metric == "DI":
            assert v.value >= 0
        else:
            assert -1 <= v.value <= 1


# mitigation ---------------------------------------------------------------


@FAST
@given(datasets(max_n=100, weighted=True, all_cells=True))
def test_reweigh_properties(d):
    out = reweigh(d, GP)
    spd = evaluate_all(out, [GP]).value("G", "SPD")
    assert abs(spd) <= 1e-12
    assert abs(out.weights.sum() - d.weights.sum()) <= 1e-9 * d.weights.sum()
    again = weight_plan(out, GP).weights
    assert all(abs(w - 1) <= 1e-12 for w in again.values())


@FAST
@given(datasets(all_cells=True), st.sampled_from(["oversample", "undersample"]), st.integers(0, 5))
def test_resample_copies_rows(d, strategy, seed):
    try:
        out = resample(d, GP, strategy, seed)
    except Exception as exc:  # undersampling may legitimately refuse
        assert strategy == "undersample" and "empty" in str(exc)
        return
    originals = {(g, int(y)) for g, y in zip(d.column("G"), d.labels)}
    assert {(g, int(y)) for g, y in zip(out.column("G"), out.labels)} <= originals
    rates = [Fraction(sum(1 for g, y in zip(out.column("G"), out.labels) if g == h and y == 1),
                      out.column("G").count(h)) for h in "PQ"]
    assert abs(rates[0] - rates[1]) <= Fraction(1, min(out.column("G").count(h) for h in "PQ"))


# rating -------------------------------------------------------------------

metric_values = st.one_of(
    st.builds(MetricValue, st.sampled_from(["SPD", "EOD", "EMOD", "AOD"]),
              st.one_of(st.none(), st.floats(-2, 2)), st.just("model")),
    st.builds(MetricValue, st.just("DI"), st.one_of(st.none(), st.floats(0, 10)), st.just("dataset")),
)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=6))
def test_rating_identity_and_bounds(indices):
    r = fairness_score(indices)
    assert r.fairness_score == 1 - r.bias_index
    assert 0 <= r.bias_index <= 1 and 0 <= r.fairness_score <= 1


@given(st.lists(metric_values, min_size=1, max_size=8))
def test_deviation_bounds(values):
    for v in values:
        assert 0 <= deviation(v).deviation <= 1


@given(st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 1)), min_size=1, max_size=6))
def test_rating_monotone(pairs):
    from fairlayers.metrics import AttributeMetrics, MetricReport

    def report(xs):
        vals = tuple(MetricValue("SPD", x, "dataset") for x in xs)
        return MetricReport("dataset", (AttributeMetrics("G", vals),))

    before = [x for x, _ in pairs]
    after = [x * shrink for x, shrink in pairs]  # every |deviation| weakly decreases
    b0 = bias_index(report(before), "G").bias_index
    b1 = bias_index(report(after), "G").bias_index
    assert b1 <= b0 + 1e-15
    assert fairness_score([b1]).fairness_score >= fairness_score([b0]).fairness_score - 1e-15


def test_ideal_fixed_point():
    vals = [MetricValue("SPD", 0.0, "dataset"), MetricValue("DI", 1.0, "dataset"), MetricValue("EOD", 0.0, "model")]
    assert all(deviation(v).deviation == 0 for v in vals)
    r = fairness_score([0.0])
    assert (r.bias_index, r.fairness_score) == (0.0, 1.0)


# model --------------------------------------------------------------------

@st.composite
def problems(draw, max_rows=30, max_features=6):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(2, max_rows))
    k = draw(st.integers(1, max_features))
    X = rng.normal(size=(n, k))
    y = rng.integers(0, 2, n).astype(float)
    w = rng.uniform(0.1, 3.0, n)
    params = rng.normal(scale=0.5, size=k + 1)
    l2 = draw(st.sampled_from([0.0, 1e-4, 0.1]))
    return params, X, y, w, l2


def relative_gradient_error(params, X, y, w, l2, h=1e-5):
    _, g = loss_and_gradient(params, X, y, w, l2)
    num = np.empty_like(params)
    for j in range(len(params)):
        e = np.zeros_like(params)
        e[j] = h
        num[j] = (loss_and_gradient(params + e, X, y, w, l2)[0] - loss_and_gradient(params - e, X, y, w, l2)[0]) / (2 * h)
    return np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12)


@settings(max_examples=50, deadline=None)
@given(problems())
def test_gradient_check(problem):
    assert relative_gradient_error(*problem) < 1e-4


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_loss_decreases_for_small_lr(seed):
    rng = np.random.default_rng(seed)
    d = toy(list(rng.choice(["P", "Q"], 20)), rng.integers(0, 2, 20), **{f"x{j}": list(rng.normal(size=20)) for j in range(4)})
    assume(0 < d.labels.sum() < 20)
    m = train(d, ModelConfig(learning_rate=0.01, max_iter=200, tol=0.0))
    losses = np.array(m.loss_log)
    assert np.all(np.diff(losses) <= 1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_duplicate_row_equals_double_weight(seed):
    rng = np.random.default_rng(seed)
    n = 12
    d = toy(list(rng.choice(["P", "Q"], n)), rng.integers(0, 2, n), x=list(rng.normal(size=n)))
    assume(0 < d.labels.sum() < n)
    j = int(rng.integers(0, n))
    w = np.ones(n)
    w[j] = 2.0
    cfg = ModelConfig(max_iter=500, tol=0.0)
    a = train(d.with_weights(w), cfg)
    b = train(d.take(list(range(n)) + [j]), cfg)
    assert abs(a.loss_log[-1] - b.loss_log[-1]) <= 1e-9
    assert np.allclose(a.params, b.params, rtol=0, atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_training_is_repeatable(seed):
    rng = np.random.default_rng(seed)
    d = toy(list(rng.choice(["P", "Q"], 15)), rng.integers(0, 2, 15), x=list(rng.normal(size=15)))
    assume(0 < d.labels.sum() < 15)
    cfg = ModelConfig(max_iter=300, seed=seed)
    assert np.array_equal(train(d, cfg).params, train(d, cfg).params)


# checklist ----------------------------------------------------------------

DEFS = {d.layer: d for d in load_definitions()}
statuses = st.sampled_from([SATISFIED, NOT_SATISFIED, NOT_APPLICABLE, UNANSWERED])


@st.composite
def responses(draw, layer):
    items = {}
    for it in DEFS[layer].items:
        status = draw(statuses)
        items[it.id] = ItemResponse(status, "reason", ("evidence",))
    return ChecklistResponse(layer, items)


@given(st.sampled_from(range(1, 8)).flatmap(lambda l: st.tuples(st.just(l), responses(l))), st.data())
def test_verdict_monotonicity(pair, data):
    layer, resp = pair
    failing = [k for k, v in resp.items.items() if v.status == NOT_SATISFIED]
    assume(failing)
    flip = data.draw(st.sampled_from(failing))
    before = evaluate_layer(DEFS[layer], resp).verdict
    items = dict(resp.items)
    items[flip] = ItemResponse(SATISFIED, "fixed", ("evidence",))
    after = evaluate_layer(DEFS[layer], ChecklistResponse(layer, items)).verdict
    assert not (before == PASS and after != PASS)
    if before == FAIL and len(failing) == 1:
        assert after == PASS


@given(st.sampled_from(range(1, 8)).flatmap(responses))
def test_response_round_trip(resp):
    assert ChecklistResponse.from_dict(json.loads(json.dumps(resp.to_dict()))) == resp


def test_definitions_round_trip():
    text = dump_definitions(list(DEFS.values()))
    assert dump_definitions(list({d.layer: d for d in load_definitions()}.values())) == text


# drift --------------------------------------------------------------------


@FAST
@given(datasets(), datasets())
def test_tvd_bounds(a, b):
    p, q = category_distribution(a, "G"), category_distribution(b, "G")
    assert abs(sum(p.values()) - 1) <= 1e-9
    t = total_variation(p, q)
    assert 0 <= t <= 1
    assert drift_check(a, a, [GP]).attributes[0].tvd == 0
