#!/usr/bin/env python3
"""Write the one-shot replay fixtures for the bundled dataset.

The responses below were authored by hand to cover the three outcomes the
harness must handle: a perfect answer (004), a refusal in prose (005) and a
fenced, imperfect answer with one dangling flow reference (006). They are
passed through RecordingChatClient so each file carries the digest of the
exact request it answers.
"""

import argparse
from pathlib import Path

from procmodel.generation import LlmClientConfig, RecordingChatClient, generate_model
from procmodel.harness import load_dataset
from procmodel.model import serialize_model

IMPERFECT_006 = """Here is the extracted process model:

```json
{
  "tasks": [
    {"id": 0, "name": "Receive application", "type": "receive"},
    {"id": 1, "name": "Check credit rating", "type": "service"},
    {"id": 2, "name": "Assess risk", "type": "user"},
    {"id": 3, "name": "Approve loan", "type": "user"},
    {"id": 4, "name": "Reject the loan", "type": "manual"},
    {"id": 5, "name": "Send decision", "type": "send"}
  ],
  "events": [
    {"id": 6, "name": "Application submitted", "type": "Start Message"},
    {"id": 7, "name": "", "type": "End None"}
  ],
  "gateways": [
    {"id": 8, "name": "Is risk acceptable?", "type": "exclusive"},
    {"id": 9, "type": "exclusive"}
  ],
  "pools": [
    {"id": 10, "name": "Bank", "lanes": [
      {"id": 11, "name": "Loan officer", "elementRefs": [6, 0, 2, 8, 3, 4, 9, 5, 7]},
      {"id": 12, "name": "Credit dept.", "elementRefs": [1]}
    ]}
  ],
  "sequenceFlows": [
    {"id": 13, "source": 6, "target": 0},
    {"id": 14, "source": 0, "target": 1},
    {"id": 15, "source": 1, "target": 2},
    {"id": 16, "source": 2, "target": 8},
    {"id": 17, "source": 8, "target": 3, "condition": "yes"},
    {"id": 18, "source": 8, "target": 4},
    {"id": 19, "source": 3, "target": 9},
    {"id": 20, "source": 4, "target": 9},
    {"id": 21, "source": 9, "target": 5},
    {"id": 22, "source": 5, "target": 99}
  ],
  "messageFlows": []
}
```

The applicant pool was not clearly visible in the diagram."""

PROSE_005 = "I'm sorry, but I cannot reliably read the diagram on these pages. Could you provide a higher-resolution scan?"


class ScriptedClient:
    def __init__(self, responses: dict[str, str]):
        self.responses = responses

    def complete(self, messages, cfg, *, doc_id="", strategy=""):
        return self.responses[doc_id]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", default="tests/fixtures/dataset")
    ap.add_argument("--out", default="tests/fixtures/replay")
    args = ap.parse_args()

    index = load_dataset(args.dataset)
    responses = {
        "004": serialize_model(index["004"].ground_truth()),
        "005": PROSE_005,
        "006": IMPERFECT_006,
    }
    client = RecordingChatClient(Path(args.out), ScriptedClient(responses))
    cfg = LlmClientConfig()
    strategy = index.strategy("one-shot")
    for entry in index.evaluation_entries:
        trace = generate_model(entry.pages(), strategy, cfg, client)
        print(entry.model_id, trace.stage, trace.validation.codes() if trace.validation else None)


if __name__ == "__main__":
    main()
