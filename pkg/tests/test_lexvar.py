from __future__ import annotations

import random
import string

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import expand_bruteforce, levenshtein_matrix
from toxipipe import lexvar
from toxipipe.errors import ContractError, DomainError, FormatError
from toxipipe.lexvar import (
    ExpansionConfig,
    VariantSet,
    cosine,
    expand_multiword,
    expand_term,
    levenshtein,
    lexical_similarity,
    load_embeddings,
    retrieval_gain,
)

SHORT = st.text(alphabet=string.ascii_lowercase, max_size=8)


# ---------------------------------------------------------------------------
# load_embeddings


def test_load_roundtrip(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("alpha 1 2 3\nbeta 0.5 -0.5 0\n", encoding="utf-8")
    model = load_embeddings(path)
    assert len(model) == 2
    assert model.dimension == 3
    assert np.allclose(model.vector("beta"), [0.5, -0.5, 0.0])


def test_load_dimension_mismatch_names_line(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("alpha 1 2 3\nbeta 1 2\n", encoding="utf-8")
    with pytest.raises(FormatError) as excinfo:
        load_embeddings(path)
    assert excinfo.value.line == 2


def test_load_empty_file_fails(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("", encoding="utf-8")
    with pytest.raises(FormatError):
        load_embeddings(path)


def test_load_header_and_duplicates(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("3 2\na 1 0\nb 0 1\na 9 9\n", encoding="utf-8")
    model = load_embeddings(path)
    assert len(model) == 2
    assert model.duplicate_count == 1
    assert np.allclose(model.vector("a"), [1, 0])  # first occurrence wins


def test_load_toy_fixture(toy_embeddings_path, toy_model):
    # Oracle: count the non-header lines of the authored fixture.
    lines = [
        ln for ln in toy_embeddings_path.read_text(encoding="utf-8").splitlines() if ln
    ]
    assert len(toy_model) == len(lines) - 1 == 12
    assert toy_model.dimension == 8


# ---------------------------------------------------------------------------
# cosine


def test_cosine_identity():
    assert cosine([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine([1, 0], [0, 1]) == 0.0


def test_cosine_opposition():
    assert cosine([1, 0], [-1, 0]) == -1.0


def test_cosine_zero_norm_is_domain_error():
    with pytest.raises(DomainError):
        cosine([0, 0], [1, 0])


def test_cosine_symmetry_and_scale_invariance():
    rng = np.random.default_rng(4)
    for _ in range(50):
        u = rng.normal(size=5)
        v = rng.normal(size=5)
        c = rng.uniform(0.01, 100.0)
        assert abs(cosine(u, v) - cosine(v, u)) < 1e-12
        assert abs(cosine(c * u, v) - cosine(u, v)) < 1e-9


# ---------------------------------------------------------------------------
# levenshtein / lexical_similarity


@pytest.mark.parametrize(
    "a,b,expected",
    [
        ("xanax", "xanax", 0),
        ("", "abc", 3),
        ("abc", "", 3),
        ("kitten", "sitting", 3),  # frozen from the DP-matrix oracle
        ("adderall", "aderall", 1),
        ("a", "b", 1),
    ],
)
def test_levenshtein_cases(a, b, expected):
    assert levenshtein_matrix(a, b) == expected
    assert levenshtein(a, b) == expected


@settings(max_examples=200, deadline=None)
@given(SHORT, SHORT)
def test_levenshtein_matches_dp_oracle_and_symmetry(a, b):
    d = levenshtein(a, b)
    assert d == levenshtein_matrix(a, b)
    assert d == levenshtein(b, a)
    assert (d == 0) == (a == b)


@settings(max_examples=100, deadline=None)
@given(SHORT, SHORT, SHORT)
def test_levenshtein_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_lexical_similarity_cases():
    assert lexical_similarity("xanax", "xanax") == 1.0
    assert lexical_similarity("xanax", "xanaxx") == pytest.approx(1 - 1 / 6)
    assert lexical_similarity("ab", "cd") == 0.0


def test_lexical_similarity_both_empty_is_domain_error():
    with pytest.raises(DomainError):
        lexical_similarity("", "")


# ---------------------------------------------------------------------------
# expand_term


def _oracle_tokens(model, seed, config):
    return expand_bruteforce(
        model.tokens,
        [model.vectors[i] for i in range(len(model))],
        seed,
        theta_sem=config.theta_sem,
        theta_lex=config.theta_lex,
        max_depth=config.max_depth,
        max_neighbors=config.max_neighbors,
    )


def test_expand_spec_example(toy_model):
    # xanaxx passes both gates; zoloft is semantically close but lexically
    # far from the seed and must be rejected.
    config = ExpansionConfig(theta_sem=0.75, theta_lex=0.70, max_depth=3)
    assert cosine(toy_model.vector("xanax"), toy_model.vector("zoloft")) >= 0.75
    assert lexical_similarity("xanax", "zoloft") < 0.70
    result = expand_term("xanax", toy_model, config)
    assert result.tokens() == {"xanaxx"}


def test_expand_unsatisfiable_theta(toy_model):
    # theta_sem=1.0 with strict inequality semantics: nothing but exact
    # duplicates could pass; the toy fixture has none.
    result = expand_term("xanax", toy_model, ExpansionConfig(theta_sem=1.0))
    assert result.variants == ()


def test_expand_depth_zero(toy_model):
    result = expand_term("xanax", toy_model, ExpansionConfig(max_depth=0))
    assert result.variants == ()


def test_expand_unknown_seed_flagged(toy_model):
    result = expand_term("fentanyl", toy_model, ExpansionConfig())
    assert result.variants == ()
    assert result.in_vocabulary is False


def test_expand_depth2_recursion(toy_model):
    # xnx is below theta_sem from the seed but reachable through xanaxx.
    config = ExpansionConfig(theta_sem=0.75, theta_lex=0.55, max_depth=3)
    result = expand_term("xanax", toy_model, config)
    by_token = {v.token: v for v in result.variants}
    assert set(by_token) == {"xanaxx", "xnx"}
    assert by_token["xanaxx"].depth == 1
    assert by_token["xnx"].depth == 2
    # depth 1 cannot reach xnx
    shallow = expand_term(
        "xanax", toy_model, ExpansionConfig(theta_sem=0.75, theta_lex=0.55, max_depth=1)
    )
    assert shallow.tokens() == {"xanaxx"}


def test_expand_matches_bruteforce_oracle(toy_model):
    configs = [
        ExpansionConfig(theta_sem=ts, theta_lex=tl, max_depth=d, max_neighbors=k)
        for ts, tl, d, k in [
            (0.75, 0.70, 3, 50),
            (0.75, 0.55, 3, 50),
            (0.60, 0.50, 2, 3),
            (0.50, 0.40, 4, 2),
            (0.90, 0.80, 1, 12),
        ]
    ]
    for seed in toy_model.tokens:
        for config in configs:
            got = {v.token: v.depth for v in expand_term(seed, toy_model, config).variants}
            assert got == _oracle_tokens(toy_model, seed, config), (seed, config)


def test_expand_monotone_in_thresholds(toy_model):
    base = ExpansionConfig(theta_sem=0.80, theta_lex=0.70, max_depth=3)
    wider_sem = ExpansionConfig(theta_sem=0.60, theta_lex=0.70, max_depth=3)
    wider_lex = ExpansionConfig(theta_sem=0.80, theta_lex=0.40, max_depth=3)
    for seed in toy_model.tokens:
        tight = expand_term(seed, toy_model, base).tokens()
        assert expand_term(seed, toy_model, wider_sem).tokens() >= tight
        assert expand_term(seed, toy_model, wider_lex).tokens() >= tight


def test_expand_deterministic(toy_model):
    config = ExpansionConfig(theta_sem=0.5, theta_lex=0.4, max_depth=3)
    first = expand_term("oxycodone", toy_model, config)
    for _ in range(3):
        assert expand_term("oxycodone", toy_model, config) == first


def test_expand_variants_reverify_predicates(toy_model):
    config = ExpansionConfig(theta_sem=0.6, theta_lex=0.5, max_depth=3)
    for seed in toy_model.tokens:
        result = expand_term(seed, toy_model, config)
        for v in result.variants:
            assert v.cosine_to_parent >= config.theta_sem
            assert v.lexical_similarity_to_seed >= config.theta_lex
            assert v.depth <= config.max_depth
            assert v.lexical_similarity_to_seed == pytest.approx(
                lexical_similarity(v.token.casefold(), seed.casefold())
            )
            assert v.token.casefold() != seed.casefold()


def test_neighbor_ties_break_lexicographically():
    # Two candidates at identical cosine: the lexicographically smaller
    # token must be ranked first.
    tokens = ["seed", "bbb", "aaa"]
    vectors = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    model = lexvar.EmbeddingModel(
        tokens=tuple(tokens), vectors=vectors, _index={t: i for i, t in enumerate(tokens)}
    )
    ranked = lexvar.top_neighbors(model, "seed", 2)
    assert [t for t, _ in ranked] == ["aaa", "bbb"]


# ---------------------------------------------------------------------------
# expand_multiword


def test_multiword_single_alteration(toy_model):
    config = ExpansionConfig(theta_sem=0.75, theta_lex=0.70, max_depth=3)
    result = expand_multiword(["xanax", "adderall"], toy_model, config)
    # Brute-force recombination: per-token variant sets are {xanaxx} and
    # {aderall, adderal}; with at most one altered token that is 3 variants.
    assert result.tokens() == {
        "xanaxx adderall",
        "xanax aderall",
        "xanax adderal",
    }
    by_token = {v.token: v for v in result.variants}
    assert by_token["xanaxx adderall"].lexical_similarity_to_seed == pytest.approx(1 - 1 / 6)


def test_multiword_two_alterations(toy_model):
    config = ExpansionConfig(
        theta_sem=0.75, theta_lex=0.70, max_depth=3, max_altered_tokens=2
    )
    result = expand_multiword(["xanax", "adderall"], toy_model, config)
    assert "xanaxx aderall" in result.tokens()
    assert len(result) == 3 + 2  # three single-altered plus 1x2 double-altered


def test_multiword_empty_when_no_token_expands(toy_model):
    config = ExpansionConfig(theta_sem=0.99, theta_lex=0.99)
    result = expand_multiword(["percocet", "zoloft"], toy_model, config)
    assert result.variants == ()


def test_multiword_zero_altered_tokens(toy_model):
    config = ExpansionConfig(max_altered_tokens=0)
    result = expand_multiword(["xanax", "adderall"], toy_model, config)
    assert result.variants == ()


def test_multiword_single_token_is_contract_error(toy_model):
    with pytest.raises(ContractError):
        expand_multiword(["xanax"], toy_model, ExpansionConfig())


# ---------------------------------------------------------------------------
# retrieval_gain


@pytest.mark.parametrize(
    "baseline,expanded,expected",
    [(100, 135, 35.0), (100, 100, 0.0), (200, 270, 35.0)],
)
def test_retrieval_gain(baseline, expanded, expected):
    assert retrieval_gain(baseline, expanded) == expected


def test_retrieval_gain_zero_baseline():
    with pytest.raises(DomainError):
        retrieval_gain(0, 10)


def test_retrieval_gain_shrinking_is_contract_error():
    with pytest.raises(ContractError):
        retrieval_gain(10, 9)


# ---------------------------------------------------------------------------
# lexicon csv io


def test_lexicon_csv_roundtrip(tmp_path, toy_model):
    config = ExpansionConfig(theta_sem=0.6, theta_lex=0.5, max_depth=3)
    lexicon = lexvar.expand_lexicon(
        ["xanax", "adderall", "oxycodone"], toy_model, config
    )
    path = tmp_path / "lexicon.csv"
    lexvar.write_lexicon_csv(path, lexicon)
    loaded = lexvar.read_lexicon_csv(path)
    assert set(loaded) == {s for s in lexicon if lexicon[s].variants}
    for seed, vs in loaded.items():
        assert vs.tokens() == lexicon[seed].tokens()


def test_random_models_match_oracle():
    # Random small vocabularies keep the oracle honest beyond the fixture.
    rng = random.Random(20240811)
    nprng = np.random.default_rng(99)
    alphabet = "abcdxyz"
    for trial in range(10):
        vocab = sorted(
            {
                "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 6)))
                for _ in range(rng.randint(5, 10))
            }
        )
        vectors = nprng.normal(size=(len(vocab), 4))
        model = lexvar.EmbeddingModel(
            tokens=tuple(vocab),
            vectors=vectors,
            _index={t: i for i, t in enumerate(vocab)},
        )
        config = ExpansionConfig(
            theta_sem=rng.uniform(0.1, 0.9),
            theta_lex=rng.uniform(0.2, 0.7),
            max_depth=rng.randint(1, 3),
            max_neighbors=rng.randint(1, len(vocab)),
        )
        seed = rng.choice(vocab)
        got = {v.token: v.depth for v in expand_term(seed, model, config).variants}
        want = expand_bruteforce(
            vocab,
            list(vectors),
            seed,
            theta_sem=config.theta_sem,
            theta_lex=config.theta_lex,
            max_depth=config.max_depth,
            max_neighbors=config.max_neighbors,
        )
        assert got == want, (trial, seed, config)
