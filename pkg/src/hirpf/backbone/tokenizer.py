"""Byte-level tokenizer with a handful of special ids above the byte range."""

from __future__ import annotations

from dataclasses import dataclass

PAD, BOS, EOS, SPK_A, SPK_B, SYS = 256, 257, 258, 259, 260, 261
SPECIALS = {"PAD": PAD, "BOS": BOS, "EOS": EOS, "SPK_A": SPK_A, "SPK_B": SPK_B, "SYS": SYS}
VOCAB_SIZE = 262


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class ByteTokenizer:
    vocab_size: int = VOCAB_SIZE

    def tokenize(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))

    def detokenize(self, ids, errors: str = "strict") -> str:
        out = bytearray()
        for i in ids:
            i = int(i)
            if i < 0 or i >= self.vocab_size:
                raise DecodeError(f"token id {i} outside vocabulary of size {self.vocab_size}")
            if i < 256:
                out.append(i)
        try:
            return out.decode("utf-8", errors=errors)
        except UnicodeDecodeError as exc:
            raise DecodeError(f"byte sequence is not valid UTF-8: {exc}") from exc

    def to_dict(self) -> dict:
        return {"kind": "byte", "vocab_size": self.vocab_size, "specials": dict(SPECIALS)}

    @classmethod
    def from_dict(cls, d: dict) -> ByteTokenizer:
        if d.get("kind") != "byte" or d.get("specials") != SPECIALS:
            raise ValueError(f"unsupported tokenizer spec {d!r}")
        return cls(vocab_size=int(d["vocab_size"]))


def tokenize(text: str) -> list[int]:
    return ByteTokenizer().tokenize(text)


def detokenize(ids, errors: str = "strict") -> str:
    return ByteTokenizer().detokenize(ids, errors=errors)
