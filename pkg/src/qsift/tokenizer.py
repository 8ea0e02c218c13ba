"""WordPiece tokenization and fixed-length sequence encoding.

Words are matched greedily against the vocabulary: longest prefix first,
then longest "##"-continuation of the remainder, until the word is
consumed. A word with no match at any step becomes [UNK] wholesale.
Encoded sequences are wrapped in [CLS]/[SEP], truncated from the tail,
and padded with [PAD]=0 up to the fixed length.
"""

from __future__ import annotations

from dataclasses import dataclass

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP, MASK)

# words longer than this become [UNK] without attempting greedy matching
MAX_WORD_CHARS = 100


class Vocab:
    """Immutable token<->id bijection with the five reserved specials."""

    def __init__(self, tokens: list[str]):
        self._id_to_token = list(tokens)
        self._token_to_id: dict[str, int] = {}
        for i, tok in enumerate(tokens):
            if tok in self._token_to_id:
                raise ValueError(
                    f"duplicate token {tok!r} at lines {self._token_to_id[tok] + 1} and {i + 1}"
                )
            self._token_to_id[tok] = i
        for special in SPECIAL_TOKENS:
            if special not in self._token_to_id:
                raise ValueError(f"vocabulary is missing special token {special}")
        if self._token_to_id[PAD] != 0:
            raise ValueError(f"{PAD} must be id 0, found id {self._token_to_id[PAD]}")
        self.pad_id = 0
        self.unk_id = self._token_to_id[UNK]
        self.cls_id = self._token_to_id[CLS]
        self.sep_id = self._token_to_id[SEP]
        self.mask_id = self._token_to_id[MASK]
        self.special_ids = frozenset(self._token_to_id[t] for t in SPECIAL_TOKENS)

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id(self, token: str) -> int:
        return self._token_to_id[token]

    def token(self, token_id: int) -> str:
        return self._id_to_token[token_id]

    def regular_ids(self) -> list[int]:
        """All ids except the five specials (the MLM RANDOM-replacement pool)."""
        return [i for i in range(len(self._id_to_token)) if i not in self.special_ids]


def load_vocab(path) -> Vocab:
    """One token per line; the line number (0-based) is the id."""
    tokens = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            token = raw.rstrip("\n")
            if not token.strip():
                raise ValueError(f"{path}:{lineno}: blank vocabulary line")
            tokens.append(token)
    return Vocab(tokens)


@dataclass
class TokenizedSequence:
    """Fixed-length encoding: id list plus mask and segment annotations.

    attention_mask is a prefix of 1s (real tokens, [CLS]/[SEP] included)
    followed by 0s over padding; ids[i] == 0 exactly where the mask is 0.
    """

    ids: list[int]
    attention_mask: list[int]
    segment_ids: list[int]
    original_length: int


def _split_words(text: str, lowercase: bool) -> list[str]:
    """Whitespace split, with punctuation broken out as single-char words."""
    if lowercase:
        text = text.lower()
    words: list[str] = []
    current: list[str] = []
    for ch in text:
        if ch.isspace():
            if current:
                words.append("".join(current))
                current = []
        elif ch.isalnum():
            current.append(ch)
        else:
            if current:
                words.append("".join(current))
                current = []
            words.append(ch)
    if current:
        words.append("".join(current))
    return words


def _match_word(word: str, vocab: Vocab) -> list[str]:
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        found = None
        while start < end:
            piece = word[start:end]
            if start > 0:
                piece = "##" + piece
            if piece in vocab:
                found = piece
                break
            end -= 1
        if found is None:
            return [UNK]
        pieces.append(found)
        start = end
    return pieces


def wordpiece_tokenize(text: str, vocab: Vocab, lowercase: bool = True) -> list[str]:
    tokens = []
    for word in _split_words(text, lowercase):
        tokens.extend(_match_word(word, vocab))
    return tokens


def _finish(ids: list[int], segment_ids: list[int], max_len: int) -> TokenizedSequence:
    real = len(ids)
    pad_count = max_len - real
    return TokenizedSequence(
        ids=ids + [0] * pad_count,
        attention_mask=[1] * real + [0] * pad_count,
        segment_ids=segment_ids + [0] * pad_count,
        original_length=real,
    )


def encode(text: str, vocab: Vocab, max_len: int, lowercase: bool = True) -> TokenizedSequence:
    """[CLS] tokens [SEP], tail-truncated to fit, zero-padded to max_len."""
    if max_len < 3:
        raise ValueError(f"max_len must be at least 3, got {max_len}")
    token_ids = [vocab.id(t) for t in wordpiece_tokenize(text, vocab, lowercase)]
    token_ids = token_ids[: max_len - 2]
    ids = [vocab.cls_id] + token_ids + [vocab.sep_id]
    return _finish(ids, [0] * len(ids), max_len)


def encode_pair(a: str, b: str, vocab: Vocab, max_len: int, lowercase: bool = True) -> TokenizedSequence:
    """[CLS] a [SEP] b [SEP] with segment ids 0/1.

    Joint truncation removes one token at a time from whichever segment
    is currently longer (ties trim segment a).
    """
    if max_len < 5:
        raise ValueError(f"max_len must be at least 5 for pairs, got {max_len}")
    ids_a = [vocab.id(t) for t in wordpiece_tokenize(a, vocab, lowercase)]
    ids_b = [vocab.id(t) for t in wordpiece_tokenize(b, vocab, lowercase)]
    budget = max_len - 3
    while len(ids_a) + len(ids_b) > budget:
        if len(ids_a) >= len(ids_b):
            ids_a.pop()
        else:
            ids_b.pop()
    ids = [vocab.cls_id] + ids_a + [vocab.sep_id] + ids_b + [vocab.sep_id]
    segments = [0] * (len(ids_a) + 2) + [1] * (len(ids_b) + 1)
    return _finish(ids, segments, max_len)


def encode_pair_ids(ids_a: list[int], ids_b: list[int], vocab: Vocab, max_len: int) -> TokenizedSequence:
    """encode_pair for already-tokenized segments (pretraining pairs)."""
    if max_len < 5:
        raise ValueError(f"max_len must be at least 5 for pairs, got {max_len}")
    ids_a, ids_b = list(ids_a), list(ids_b)
    budget = max_len - 3
    while len(ids_a) + len(ids_b) > budget:
        if len(ids_a) >= len(ids_b):
            ids_a.pop()
        else:
            ids_b.pop()
    ids = [vocab.cls_id] + ids_a + [vocab.sep_id] + ids_b + [vocab.sep_id]
    segments = [0] * (len(ids_a) + 2) + [1] * (len(ids_b) + 1)
    return _finish(ids, segments, max_len)


def decode(ids, vocab: Vocab) -> str:
    """Inverse for display: merge "##" pieces, drop [PAD]/[CLS]/[SEP]."""
    drop = {vocab.pad_id, vocab.cls_id, vocab.sep_id}
    words: list[str] = []
    for i in ids:
        if i in drop:
            continue
        token = vocab.token(int(i))
        if token.startswith("##") and words:
            words[-1] += token[2:]
        else:
            words.append(token)
    return " ".join(words)
