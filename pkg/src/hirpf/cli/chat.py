"""Line-oriented chat over a checkpoint: user lines are speaker B, the model answers as A."""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Iterable, TextIO

from ..backbone import EOS, Sampling
from ..identity import ActivationSet, HIRPFModel, activate
from ..trainer.data import DialogueSample, PromptBuilder, Turn, write_dataset

HELP = ("commands: /reset  /activate name,name  /seed N  /save path  /quit\n"
        "any other line is said to the agent")
# an empty decode cannot be stored as a turn, so it is shown and kept as this
EMPTY_REPLY = "..."


def parse_names(text: str) -> list[str]:
    return [n.strip() for n in text.split(",") if n.strip()]


class ChatSession:
    def __init__(self, model: HIRPFModel, activation: ActivationSet, max_new: int = 64,
                 sampling: Sampling = Sampling(), builder: PromptBuilder | None = None):
        self.model = model
        self.activation = activation
        self.max_new = max_new
        self.sampling = sampling
        self.builder = builder or PromptBuilder()
        self.turns: list[Turn] = []
        self.saved: list[Path] = []
        self.finished = False

    def reply(self, text: str) -> str:
        turns = self.turns + [Turn("B", text)]
        ids, prefix_len = self.builder.chat_prompt(self.activation, turns)
        max_len = self.model.backbone.config.max_len
        while len(ids) + self.max_new > max_len and len(turns) > 1:
            turns = turns[1:]
            ids, prefix_len = self.builder.chat_prompt(self.activation, turns)
        out = self.model.generate(ids, self.activation, self.max_new, self.sampling, prefix_len=prefix_len)
        if out and out[-1] == EOS:
            out = out[:-1]
        answer = self.builder.tokenizer.detokenize(out, errors="replace").strip() or EMPTY_REPLY
        self.turns += [Turn("B", text), Turn("A", answer)]
        return answer

    def sample(self, sample_id: str = "chat-0000") -> DialogueSample:
        return DialogueSample(sample_id, list(self.activation.keys), list(self.turns), source="chat")

    def save(self, path) -> Path:
        if len(self.turns) < 2:
            raise ValueError("nothing to save yet: the transcript needs at least one exchange")
        p = Path(path)
        write_dataset([self.sample(f"chat-{len(self.saved):04d}")], p)
        self.saved.append(p)
        return p

    def handle(self, line: str) -> str | None:
        """One input line -> the text to show (``None`` for blank input)."""
        line = line.strip()
        if not line:
            return None
        if not line.startswith("/"):
            try:
                return f"A: {self.reply(line)}"
            except Exception as exc:  # a failed generation should not end the session
                return f"error: generation failed ({type(exc).__name__}: {exc})"
        cmd, _, arg = line.partition(" ")
        arg = arg.strip()
        if cmd == "/quit":
            self.finished = True
            return "bye"
        if cmd == "/reset":
            self.turns = []
            return "transcript cleared"
        if cmd == "/activate":
            try:
                act = activate(self.model.registry, parse_names(arg))
            except (KeyError, ValueError) as exc:
                return f"error: {exc}"
            self.activation = act
            self.turns = []
            return f"active: {', '.join(act.keys) or '(none)'}; transcript cleared"
        if cmd == "/seed":
            try:
                seed = int(arg)
            except ValueError:
                return "error: /seed needs an integer"
            self.sampling = Sampling(self.sampling.greedy, self.sampling.temperature, seed)
            return f"seed {seed}"
        if cmd == "/save":
            if not arg:
                return "error: /save needs a path"
            try:
                return f"saved {self.save(arg)}"
            except (OSError, ValueError) as exc:
                return f"error: {exc}"
        return f"error: unknown command {cmd}\n{HELP}"


def run_repl(session: ChatSession, lines: Iterable[str], out: TextIO,
             prompt: Callable[[], None] | None = None) -> None:
    for line in lines:
        shown = session.handle(line)
        if shown is not None:
            out.write(shown + "\n")
            out.flush()
        if session.finished:
            break
        if prompt:
            prompt()
