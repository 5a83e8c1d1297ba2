"""Step programs: straight-line CiM micro-steps with flag-guarded blocks."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .core import Ref

# step op -> cost kind charged once per wave
OP_KIND = {
    "read": "read",
    "logic": "bitwise-logic",
    "hor": "horizontal-or",
    "add": "add",
    "shift": "shift-round",
    "copy": "ipcb-copy",
    "stage": "ipcb-copy",
    "move": "ipmb-move",
    "move_bits": "ipmb-move",
    "branch": "controller-flag-branch",
    "control": "controller-flag-branch",
}

_REF_ARGS = ("a", "b", "src", "dst")


@dataclass(frozen=True)
class Step:
    op: str
    args: dict = field(default_factory=dict)
    tag: str | None = None

    def to_dict(self) -> dict:
        args = {}
        for k, v in self.args.items():
            if isinstance(v, Ref):
                args[k] = {"ref": v.to_json()}
            elif isinstance(v, (list, tuple)) and v and isinstance(v[0], Ref):
                args[k] = {"refs": [r.to_json() for r in v]}
            else:
                args[k] = v
        d = {"op": self.op, "args": args}
        if self.tag:
            d["tag"] = self.tag
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "Step":
        args = {}
        for k, v in doc.get("args", {}).items():
            if isinstance(v, dict) and "ref" in v:
                args[k] = Ref.from_json(v["ref"])
            elif isinstance(v, dict) and "refs" in v:
                args[k] = [Ref.from_json(r) for r in v["refs"]]
            else:
                args[k] = v
        return cls(doc["op"], args, doc.get("tag"))


@dataclass
class StepProgram:
    steps: list[Step] = field(default_factory=list)
    name: str = ""

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self) -> Iterator[Step]:
        return iter(self.steps)

    def emit(self, op: str, /, tag: str | None = None, **args) -> int:
        self.steps.append(Step(op, args, tag))
        return len(self.steps) - 1

    def extend(self, other: "StepProgram") -> "StepProgram":
        self.steps.extend(other.steps)
        return self

    def guard(self, branch_index: int) -> None:
        """Close a flag-guarded block opened by a branch step at branch_index."""
        step = self.steps[branch_index]
        if step.op not in ("branch", "control"):
            raise ValueError("guard must close a branch step")
        skip = len(self.steps) - branch_index - 1
        self.steps[branch_index] = Step(step.op, {**step.args, "skip": skip}, step.tag)

    def kind_counts(self) -> Counter:
        """Static count of charged step kinds (blocks assumed taken)."""
        c = Counter()
        for s in self.steps:
            kind = OP_KIND.get(s.op)
            if kind:
                c[kind] += 1
        return c

    def shift_amounts(self) -> list[int]:
        return [s.args["amount"] for s in self.steps if s.op == "shift"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps({"step": i, **s.to_dict()}) + "\n" for i, s in enumerate(self.steps))

    def write_jsonl(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str, name: str = "") -> "StepProgram":
        return cls([Step.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()], name)
