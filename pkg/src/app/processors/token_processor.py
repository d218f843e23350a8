import re
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from sklearn.feature_extraction.text import CountVectorizer

from app.data.dataset import Dataset, DatasetError, Feature, FeatureKind

TOKEN_PREFIX = "tok:"

# Runs of letters or digits; everything else separates tokens.
_TOKEN_PATTERN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> List[str]:
    return _TOKEN_PATTERN.findall(text.lower())


@dataclass(frozen=True)
class TokenFeatureSpec:
    tokens: Tuple[str, ...]

    def __post_init__(self) -> None:
        lowered = tuple(t.lower() for t in self.tokens)
        if not lowered:
            raise DatasetError("Token spec needs at least one token")
        if any(not t for t in lowered):
            raise DatasetError("Tokens must be non-empty")
        if len(set(lowered)) != len(lowered):
            raise DatasetError(f"Duplicate tokens in {list(self.tokens)}")
        object.__setattr__(self, "tokens", lowered)

    @property
    def feature_names(self) -> List[str]:
        return [f"{TOKEN_PREFIX}{t}" for t in self.tokens]


class TokenProcessor:
    """Token-presence features derived from per-account tweet corpora."""

    @staticmethod
    def _documents(dataset: Dataset, tweets: Mapping[str, Sequence[str]]) -> List[str]:
        # One document per account; tokenization ignores the separator.
        return ["\n".join(tweets.get(rid, ())) for rid in dataset.record_ids]

    @staticmethod
    def _presence(documents: List[str], vocabulary: Optional[Sequence[str]] = None):
        vectorizer = CountVectorizer(
            analyzer=tokenize, binary=True, vocabulary=vocabulary
        )
        matrix = vectorizer.fit_transform(documents)
        return matrix, vectorizer.get_feature_names_out()

    @staticmethod
    def derive_token_features(
        dataset: Dataset, tweets: Mapping[str, Sequence[str]], spec: TokenFeatureSpec
    ) -> Dataset:
        """Appends one boolean `tok:<token>` column per spec token."""
        clashes = [n for n in spec.feature_names if n in dataset.schema]
        if clashes:
            raise DatasetError(f"{dataset.id}: token features already present: {clashes}")

        matrix, _ = TokenProcessor._presence(
            TokenProcessor._documents(dataset, tweets), vocabulary=list(spec.tokens)
        )
        presence = matrix.toarray().astype(np.float64)

        covered = sum(1 for rid in dataset.record_ids if rid in tweets)
        logger.info(
            f"TokenProcessor: Derived {len(spec.tokens)} token features for "
            f"'{dataset.id}' ({covered}/{len(dataset)} accounts have tweets)"
        )
        return Dataset(
            id=dataset.id,
            schema=dataset.schema.extend(
                Feature(name, FeatureKind.BOOLEAN) for name in spec.feature_names
            ),
            classes=dataset.classes,
            record_ids=dataset.record_ids,
            values=np.hstack([dataset.values, presence]),
            labels=dataset.labels,
            bot_type=dataset.bot_type,
            test_mask=dataset.test_mask,
            reference=dataset.reference,
        )

    @staticmethod
    def top_discriminative_tokens(
        dataset: Dataset, tweets: Mapping[str, Sequence[str]], k: int
    ) -> TokenFeatureSpec:
        """
        The k tokens with the largest gap in per-class document frequency,
        ties broken lexicographically.
        """
        dataset.require_binary()
        if k < 1:
            raise DatasetError(f"k must be >= 1, got {k}")

        try:
            matrix, vocabulary = TokenProcessor._presence(
                TokenProcessor._documents(dataset, tweets)
            )
        except ValueError as e:
            raise DatasetError(f"{dataset.id}: empty corpus ({e})") from e

        presence = matrix.toarray().astype(bool)
        doc_freq = [presence[dataset.labels == c].mean(axis=0) for c in (0, 1)]
        scores = np.abs(doc_freq[0] - doc_freq[1])

        ranked = sorted(zip(-scores, vocabulary))
        tokens = tuple(str(token) for _, token in ranked[:k])
        logger.info(f"TokenProcessor: Top tokens for '{dataset.id}': {list(tokens)}")
        return TokenFeatureSpec(tokens)
