import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from edgecert.certify import (
    Certificate,
    ConfidenceBounds,
    VoteTally,
    base_predict,
    beta_quantile,
    certified_accuracy,
    certified_k,
    certify_node,
    confidence_bounds,
    majority_class,
    smoothed_predict,
    vote_on_struct_vector,
)
from edgecert.encoder import forward, init_params
from edgecert.graph import Graph, SbmConfig, khop_subgraph, sbm_generate, to_struct_vector
from edgecert.linear_eval import fit_logreg, predict
from edgecert.noise import DeltaPolicy, EdgeDropSpec


# ------------------------------------------------------------ beta quantile


def test_beta_quantile_uniform_median():
    assert beta_quantile(0.5, 1.0, 1.0) == pytest.approx(0.5, abs=1e-10)


def test_beta_quantile_closed_form_w1():
    # Beta(n, 1) CDF is x^n, so B(q; n, 1) = q**(1/n)
    for n in (1, 10, 200):
        for q in (1e-4, 0.5, 0.999):
            assert beta_quantile(q, n, 1.0) == pytest.approx(q ** (1.0 / n), abs=1e-8)


def test_beta_quantile_known_point():
    assert beta_quantile(0.0005, 200, 1) == pytest.approx(0.0005 ** (1 / 200), abs=1e-8)
    assert 0.9627 == pytest.approx(beta_quantile(0.0005, 200, 1), abs=1e-4)


def _beta_cdf_by_quadrature(x, u, w):
    log_norm = gammaln(u + w) - gammaln(u) - gammaln(w)

    def pdf(t):
        return np.exp(log_norm + (u - 1) * np.log(t) + (w - 1) * np.log1p(-t))

    value, _ = integrate.quad(pdf, 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=200)
    return value


def test_beta_quantile_cdf_round_trip_by_quadrature():
    for q in (0.01, 0.5, 0.99):
        for u in (1.0, 2.5, 10.0):
            for w in (1.0, 2.5, 10.0):
                x = beta_quantile(q, u, w)
                assert _beta_cdf_by_quadrature(x, u, w) == pytest.approx(q, abs=1e-9)


def test_beta_quantile_domain_errors():
    with pytest.raises(ValueError):
        beta_quantile(0.0, 1, 1)
    with pytest.raises(ValueError):
        beta_quantile(1.0, 1, 1)
    with pytest.raises(ValueError):
        beta_quantile(0.5, 0.0, 1)


# ------------------------------------------------------------ vote tallies


def test_majority_class_basic():
    assert majority_class(VoteTally({0: 150, 1: 50}, 200, 7)) == 0


def test_majority_class_tie_smallest_id():
    assert majority_class(VoteTally({2: 100, 1: 100}, 200, 0)) == 1


def test_majority_class_unanimous():
    assert majority_class(VoteTally({3: 10}, 10, 0)) == 3


def test_tally_validates_sum():
    with pytest.raises(ValueError):
        VoteTally({0: 5}, 10, 0)


# ------------------------------------------------------- confidence bounds


def test_bounds_unanimous_closed_form():
    t = VoteTally({1: 200}, 200, 0)
    b = confidence_bounds(t, alpha=0.001, n_classes=2)
    expected_lower = 0.0005 ** (1 / 200)
    assert b.c_a == 1
    assert b.p_a_lower == pytest.approx(expected_lower, abs=1e-8)
    # zero-vote runner-up: B(1 - 5e-4; 1, 200) = 1 - 0.0005**(1/200)
    assert b.p_b_upper == pytest.approx(1 - expected_lower, abs=1e-8)


def test_bounds_single_vote_uniform_quantile():
    t = VoteTally({0: 1}, 1, 0)
    b = confidence_bounds(t, alpha=0.5, n_classes=2)
    assert b.p_a_lower == pytest.approx(0.25, abs=1e-10)  # B(0.25; 1, 1)


def test_bounds_capped_by_complement():
    rng = np.random.default_rng(0)
    for _ in range(20):
        mu = int(rng.integers(1, 300))
        k = int(rng.integers(1, 4))
        counts = rng.multinomial(mu, np.ones(k + 1) / (k + 1))
        tally = VoteTally({c: int(n) for c, n in enumerate(counts) if n > 0}, mu, 0)
        b = confidence_bounds(tally, alpha=0.01, n_classes=k + 1)
        assert b.p_b_upper <= 1 - b.p_a_lower + 1e-12


def test_bounds_rejects_bad_inputs():
    t = VoteTally({0: 10}, 10, 0)
    with pytest.raises(ValueError):
        confidence_bounds(t, alpha=0.0, n_classes=2)
    with pytest.raises(ValueError):
        confidence_bounds(t, alpha=0.01, n_classes=1)
    with pytest.raises(ValueError):
        confidence_bounds(VoteTally({5: 10}, 10, 0), alpha=0.01, n_classes=2)


# ------------------------------------------------------------- certified_k


def bounds(p_a, p_b, alpha=0.001, n_classes=2, c_a=0):
    return ConfidenceBounds(c_a=c_a, p_a_lower=p_a, p_b_upper=p_b,
                            alpha=alpha, n_classes=n_classes)


def test_certified_k_algebra_oracle():
    # margin 0.92: need 1 - 0.9^k < 0.46, i.e. 0.9^k > 0.54 -> k = 5
    spec = EdgeDropSpec(0.9)
    policy = DeltaPolicy("exact")
    assert certified_k(bounds(0.96, 0.04), d=100, policy=policy, spec=spec, k_max=50) == 5


def test_certified_k_full_margin():
    # margin 1: 1 - 0.9^k < 0.5 -> k = floor(ln 0.5 / ln 0.9) = 6
    spec = EdgeDropSpec(0.9)
    policy = DeltaPolicy("exact")
    assert certified_k(bounds(1.0, 0.0), d=100, policy=policy, spec=spec, k_max=10) == 6


def test_certified_k_zero_margin_absent():
    spec = EdgeDropSpec(0.9)
    assert certified_k(bounds(0.5, 0.5), d=10, policy=DeltaPolicy("exact"),
                       spec=spec, k_max=10) is None


def test_certified_k_monotone_in_margin():
    spec = EdgeDropSpec(0.9)
    policy = DeltaPolicy("exact")
    prev = -1
    for p_a in np.linspace(0.55, 1.0, 10):
        k = certified_k(bounds(float(p_a), 0.0), d=100, policy=policy, spec=spec, k_max=50)
        assert k is not None and k >= prev
        prev = k


def test_certified_k_exact_geq_paper():
    spec = EdgeDropSpec(0.8)
    for p_a in (0.7, 0.9, 0.99):
        b = bounds(p_a, min(0.02, round(1 - p_a, 6)))
        k_exact = certified_k(b, d=30, policy=DeltaPolicy("exact"), spec=spec, k_max=30)
        k_paper = certified_k(b, d=30, policy=DeltaPolicy("paper"), spec=spec, k_max=30)
        if k_paper is not None:
            assert k_exact is not None and k_exact >= k_paper


def test_certified_k_respects_cap():
    spec = EdgeDropSpec(0.9)
    assert certified_k(bounds(1.0, 0.0), d=100, policy=DeltaPolicy("exact"),
                       spec=spec, k_max=3) == 3


# ------------------------------------------------------ certified accuracy


def cert(node, c_a, ck, d=10):
    return Certificate(node=node, c_a=c_a, certified_k=ck,
                       bounds=bounds(0.9, 0.05, c_a=c_a),
                       delta_mode=DeltaPolicy("exact"), d=d)


def test_curve_all_certified_flat():
    certs = [cert(i, 0, 6) for i in range(4)]
    curve = certified_accuracy(certs, [0, 0, 0, 0], [0, 3, 6])
    assert curve == [(0, 1.0), (3, 1.0), (6, 1.0)]


def test_curve_k0_counts_certified_and_correct():
    certs = [cert(0, 0, 0), cert(1, 1, None), cert(2, 0, 2)]
    truth = [0, 1, 1]
    curve = certified_accuracy(certs, truth, [0])
    # node 0 correct+certified, node 1 correct but uncertified, node 2 wrong class
    assert curve == [(0, 1 / 3)]


def test_curve_non_increasing():
    rng = np.random.default_rng(1)
    certs = [cert(i, int(rng.integers(2)), int(rng.integers(0, 8)) if rng.random() < 0.8 else None)
             for i in range(30)]
    truth = rng.integers(0, 2, size=30)
    curve = certified_accuracy(certs, truth, range(10))
    values = [v for _, v in curve]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_curve_alignment_checked():
    with pytest.raises(ValueError):
        certified_accuracy([cert(0, 0, 1)], [0, 1], [0])


# ------------------------------------------------- smoothed prediction


def tiny_pipeline(seed=0):
    cfg = SbmConfig(
        blocks=2, nodes_per_block=10, p_in=0.5, p_out=0.05,
        feature_centers=np.array([[1.0, 1.0, 1.0], [-1.0, -1.0, -1.0]]),
        feature_noise_sd=0.3, seed=seed,
    )
    g = sbm_generate(cfg)
    enc = init_params(3, 8, 4, 8, seed=seed + 1)
    clf = fit_logreg(forward(g, enc).Z, g.labels, l2=1e-3)
    return g, enc, clf


def test_smoothed_predict_no_noise_matches_base():
    g, enc, clf = tiny_pipeline()
    spec = EdgeDropSpec(0.0)
    for node in (0, 5, 12):
        tally = smoothed_predict(g, node, enc, clf, mu=25, spec=spec, k_hop=2, seed=3)
        base = base_predict(g, node, enc, clf, k_hop=2)
        assert tally.counts == {base: 25}


def test_smoothed_predict_single_vote():
    g, enc, clf = tiny_pipeline()
    tally = smoothed_predict(g, 4, enc, clf, mu=1, spec=EdgeDropSpec(0.5), k_hop=2, seed=9)
    assert tally.mu == 1
    assert sum(tally.counts.values()) == 1


def test_smoothed_predict_deterministic():
    g, enc, clf = tiny_pipeline()
    spec = EdgeDropSpec(0.5)
    a = smoothed_predict(g, 2, enc, clf, mu=40, spec=spec, k_hop=2, seed=11)
    b = smoothed_predict(g, 2, enc, clf, mu=40, spec=spec, k_hop=2, seed=11)
    assert a.counts == b.counts


def test_smoothed_predict_stable_across_seeds():
    # confident node keeps its majority class under vote resampling
    g, enc, clf = tiny_pipeline(seed=4)
    spec = EdgeDropSpec(0.5)
    votes = [majority_class(smoothed_predict(g, 0, enc, clf, mu=200, spec=spec,
                                             k_hop=2, seed=s))
             for s in range(20)]
    assert len(set(votes)) == 1


def test_base_predict_matches_full_forward_on_subgraph():
    g, enc, clf = tiny_pipeline(seed=2)
    for node in (1, 7, 15):
        sub = khop_subgraph(g, node, 2)
        z = forward(sub.graph, enc).Z[sub.center]
        assert base_predict(g, node, enc, clf, k_hop=2) == predict(clf, z)


def test_certify_node_end_to_end():
    g, enc, clf = tiny_pipeline(seed=6)
    cert_result, tally = certify_node(
        g, 3, enc, clf, mu=100, spec=EdgeDropSpec(0.5), alpha=0.01,
        n_classes=2, policy=DeltaPolicy("exact"), k_hop=2, seed=13,
    )
    assert cert_result.node == 3
    assert cert_result.d == khop_subgraph(g, 3, 2).graph.n_edges
    assert sum(tally.counts.values()) == 100
    if cert_result.certified_k is not None:
        margin = cert_result.bounds.p_a_lower - cert_result.bounds.p_b_upper
        assert margin > 2 * (1 - 0.5 ** cert_result.certified_k)


def test_smoothed_predict_isolated_node():
    g = Graph(3, np.array([[1, 2]]), np.array([[1.0], [2.0], [3.0]]),
              np.array([0, 1, 1]))
    enc = init_params(1, 4, 3, 8, seed=0)
    clf = fit_logreg(forward(g, enc).Z, g.labels, l2=1e-3)
    tally = smoothed_predict(g, 0, enc, clf, mu=10, spec=EdgeDropSpec(0.5), k_hop=2, seed=1)
    assert sum(tally.counts.values()) == 10


# -------------------------------------- empirical soundness by enumeration


def test_certificate_sound_under_enumerated_perturbations():
    # star around node 0; all features strongly class-0 so votes are stable
    features = np.array([[2.0, 0.1], [1.8, 0.2], [2.2, -0.1], [1.9, 0.0],
                         [-2.0, 0.1], [-1.9, -0.2]])
    g = Graph(6, np.array([[0, 1], [0, 2], [0, 3], [4, 5]]), features,
              np.array([0, 0, 0, 0, 1, 1]))
    enc = init_params(2, 6, 4, 8, seed=3)
    clf = fit_logreg(forward(g, enc).Z, g.labels, l2=1e-3)
    spec = EdgeDropSpec(0.9)
    alpha = 0.01
    cert_result, _ = certify_node(
        g, 0, enc, clf, mu=200, spec=spec, alpha=alpha, n_classes=2,
        policy=DeltaPolicy("exact"), k_hop=1, seed=21,
    )
    ck = cert_result.certified_k
    assert ck is not None and ck >= 1
    # enumerate every delta of size <= ck over the subgraph's absent slots
    sub = khop_subgraph(g, 0, 1)
    v = to_struct_vector(sub.graph)
    absent = np.setdiff1d(np.arange(v.universe), v.present)
    assert absent.size <= 8
    from itertools import combinations

    from edgecert.noise import NoiseDraw, apply_xor

    mu_big = 10_000
    reruns = 3
    for size in range(1, min(ck, absent.size) + 1):
        for delta in combinations(absent.tolist(), size):
            v_pert = apply_xor(v, NoiseDraw(np.array(sorted(delta))))
            hold = 0
            for r in range(reruns):
                tally = vote_on_struct_vector(
                    v_pert, sub.graph.n_nodes, sub.graph.features, sub.center,
                    enc, clf, mu=mu_big, spec=spec, seed=1000 + r,
                )
                hold += majority_class(tally) == cert_result.c_a
            assert hold / reruns >= 1 - alpha
