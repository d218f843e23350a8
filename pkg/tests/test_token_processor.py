import pytest

from app.data.dataset import DatasetError, FeatureKind
from app.learners.tree import TreeConfig, fit_tree
from app.processors.dataset_processor import DatasetProcessor
from app.processors.token_processor import TokenFeatureSpec, TokenProcessor, tokenize
from conftest import make_dataset


def _accounts(n_humans=3, n_bots=3):
    n = n_humans + n_bots
    return make_dataset(list(range(n)), [0] * n_humans + [1] * n_bots, names=["followers"])


def test_tokenize_lowercases_and_splits_on_punctuation():
    assert tokenize("Earthquake near Rome!") == ["earthquake", "near", "rome"]
    assert tokenize("rt@user_name:#Quake") == ["rt", "user", "name", "quake"]


def test_spec_validation():
    assert TokenFeatureSpec(("Earthquake",)).tokens == ("earthquake",)
    with pytest.raises(DatasetError):
        TokenFeatureSpec(())
    with pytest.raises(DatasetError):
        TokenFeatureSpec(("Quake", "quake"))


def test_presence_feature_values():
    ds = _accounts(2, 1)
    corpus = {"r0": ["Earthquake near Rome!"], "r1": ["nothing here"]}
    derived = TokenProcessor.derive_token_features(ds, corpus, TokenFeatureSpec(("earthquake", "rome")))

    assert derived.schema.names == ["followers", "tok:earthquake", "tok:rome"]
    assert derived.schema.kind("tok:earthquake") == FeatureKind.BOOLEAN
    assert list(derived.column("tok:earthquake")) == [1.0, 0.0, 0.0]
    # r2 has no tweets at all
    assert list(derived.column("tok:rome")) == [1.0, 0.0, 0.0]


def test_presence_ignores_order_and_duplicates():
    ds = _accounts(1, 1)
    spec = TokenFeatureSpec(("quake",))
    once = TokenProcessor.derive_token_features(ds, {"r0": ["a quake", "b"]}, spec)
    twice = TokenProcessor.derive_token_features(ds, {"r0": ["b", "a quake", "a quake"]}, spec)
    assert list(once.column("tok:quake")) == list(twice.column("tok:quake"))


def test_rederiving_the_same_tokens_is_an_error():
    ds = _accounts()
    spec = TokenFeatureSpec(("quake",))
    derived = TokenProcessor.derive_token_features(ds, {}, spec)
    with pytest.raises(DatasetError, match="already present"):
        TokenProcessor.derive_token_features(derived, {}, spec)


def test_top_tokens_rank_by_document_frequency_gap():
    ds = _accounts(3, 3)
    corpus = {
        "r0": ["earthquake today", "the news"],
        "r1": ["Earthquake!", "the end"],
        "r2": ["earthquake and the sea"],
        "r3": ["buy now", "the deal"],
        "r4": ["buy cheap the"],
        "r5": ["follow back the"],
    }
    spec = TokenProcessor.top_discriminative_tokens(ds, corpus, k=2)
    # earthquake: 1 - 0; buy: 0 - 2/3
    assert spec.tokens == ("earthquake", "buy")

    everything = TokenProcessor.top_discriminative_tokens(ds, corpus, k=1000)
    assert everything.tokens[-1] == "the"
    assert len(everything.tokens) == len(set(everything.tokens))


def test_top_tokens_errors():
    ds = _accounts()
    with pytest.raises(DatasetError, match="empty corpus"):
        TokenProcessor.top_discriminative_tokens(ds, {}, k=3)
    with pytest.raises(DatasetError):
        TokenProcessor.top_discriminative_tokens(ds, {"r0": ["x"]}, k=0)


def test_earthquake_stump_is_perfect():
    n = 20
    ds = _accounts(n, n)
    corpus = {f"r{i}": ["Felt the earthquake"] for i in range(n)}
    corpus.update({f"r{i}": ["check this link"] for i in range(n, 2 * n)})
    derived = TokenProcessor.derive_token_features(ds, corpus, TokenFeatureSpec(("earthquake",)))
    only_token = DatasetProcessor.restrict(derived, derived.schema.select(["tok:earthquake"]))
    tree = fit_tree(only_token, TreeConfig(max_depth=1))
    predictions = tree.predict_many(only_token.values)
    assert (predictions == only_token.labels).all()
