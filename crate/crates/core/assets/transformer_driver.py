#!/usr/bin/env python3
"""Pretrained-encoder driver: entailment fine-tuning, scoring, embedding.

Runs as a subprocess behind the Rust transformer backend. All file formats
are JSON / JSON-lines so the host process stays language-agnostic.

Modes:
  train           fine-tune a sequence-pair classifier with a single sigmoid
                  logit and binary cross-entropy on entailment pairs
  score           entailment probabilities for premise/hypothesis pairs
  classify-train  supervised single-utterance intent classifier (prototype
                  baseline encoder)
  embed           mean-pooled sentence embeddings from a checkpoint or hub id
"""
import argparse
import json
import os
import sys


def eprint(*args):
    print(*args, file=sys.stderr)


def require_ml():
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
    except ImportError as exc:
        eprint(f"driver requires torch and transformers: {exc}")
        sys.exit(3)


def read_jsonl(path):
    rows = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(obj, handle)


def seed_everything(seed):
    import random

    import numpy as np
    import torch

    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def encode_pairs(tokenizer, rows, max_len, device):
    import torch

    batch = tokenizer(
        [r["premise"] for r in rows],
        [r["hypothesis"] for r in rows],
        truncation="only_first",
        max_length=max_len,
        padding=True,
        return_tensors="pt",
    )
    return {k: v.to(device) for k, v in batch.items()}


def linear_warmup_decay(step, total, warmup):
    if warmup > 0 and step < warmup:
        return step / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


def cmd_train(args):
    require_ml()
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    with open(args.config, encoding="utf-8") as handle:
        cfg = json.load(handle)
    seed_everything(cfg.get("seed", 0))
    device = "cuda" if torch.cuda.is_available() else "cpu"

    rows = read_jsonl(args.pairs)
    if not rows:
        eprint("empty training file")
        sys.exit(3)
    targets = [int(r["target"]) for r in rows]
    if len(set(targets)) < 2:
        eprint("training set must contain both entailment targets")
        sys.exit(2)

    tokenizer = AutoTokenizer.from_pretrained(args.model_id)
    model = AutoModelForSequenceClassification.from_pretrained(args.model_id, num_labels=1)
    model.to(device)
    model.train()

    batch_size = int(cfg["batch_size"])
    epochs = int(cfg["epochs"])
    max_len = int(cfg.get("max_len", 64))
    warmup = int(cfg.get("warmup_steps", 0))
    base_lr = float(cfg["learning_rate"])
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=base_lr, weight_decay=float(cfg.get("weight_decay", 0.01))
    )
    loss_fn = torch.nn.BCEWithLogitsLoss()

    steps_per_epoch = (len(rows) + batch_size - 1) // batch_size
    total_steps = steps_per_epoch * epochs
    log = {"epoch_mean_loss": [], "step_lrs": [], "warnings": []}
    if batch_size > len(rows):
        log["warnings"].append(
            f"batch_size {batch_size} exceeds {len(rows)} pairs; one batch per epoch"
        )

    generator = torch.Generator().manual_seed(cfg.get("seed", 0))
    step = 0
    for _epoch in range(epochs):
        order = torch.randperm(len(rows), generator=generator).tolist()
        epoch_loss = 0.0
        for start in range(0, len(order), batch_size):
            chunk = [rows[i] for i in order[start : start + batch_size]]
            labels = torch.tensor(
                [float(r["target"]) for r in chunk], dtype=torch.float32, device=device
            )
            inputs = encode_pairs(tokenizer, chunk, max_len, device)
            logits = model(**inputs).logits.squeeze(-1)
            loss = loss_fn(logits, labels)

            scale = linear_warmup_decay(step, total_steps, warmup)
            for group in optimizer.param_groups:
                group["lr"] = base_lr * scale
            log["step_lrs"].append(base_lr * scale)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            epoch_loss += loss.item() * len(chunk)
        log["epoch_mean_loss"].append(epoch_loss / len(rows))

    checkpoint = os.path.join(args.out, "checkpoint")
    os.makedirs(checkpoint, exist_ok=True)
    model.save_pretrained(checkpoint)
    tokenizer.save_pretrained(checkpoint)
    write_json(os.path.join(args.out, "train_log.json"), log)


def cmd_score(args):
    require_ml()
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    device = "cuda" if torch.cuda.is_available() else "cpu"
    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModelForSequenceClassification.from_pretrained(args.model)
    model.to(device)
    model.eval()

    rows = read_jsonl(args.pairs)
    scores = []
    with torch.no_grad():
        for start in range(0, len(rows), args.batch_size):
            chunk = rows[start : start + args.batch_size]
            inputs = encode_pairs(tokenizer, chunk, args.max_len, device)
            logits = model(**inputs).logits.squeeze(-1)
            scores.extend(torch.sigmoid(logits).double().cpu().tolist())
    write_json(args.out, scores)


def cmd_classify_train(args):
    require_ml()
    import torch
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    with open(args.config, encoding="utf-8") as handle:
        cfg = json.load(handle)
    seed_everything(cfg.get("seed", 0))
    device = "cuda" if torch.cuda.is_available() else "cpu"

    rows = read_jsonl(args.records)
    labels = sorted({r["label"] for r in rows})
    label_index = {name: i for i, name in enumerate(labels)}

    tokenizer = AutoTokenizer.from_pretrained(args.model_id)
    model = AutoModelForSequenceClassification.from_pretrained(
        args.model_id, num_labels=len(labels)
    )
    model.to(device)
    model.train()

    batch_size = int(cfg["batch_size"])
    epochs = int(cfg["epochs"])
    max_len = int(cfg.get("max_len", 64))
    optimizer = torch.optim.AdamW(model.parameters(), lr=float(cfg["learning_rate"]))

    generator = torch.Generator().manual_seed(cfg.get("seed", 0))
    for _epoch in range(epochs):
        order = torch.randperm(len(rows), generator=generator).tolist()
        for start in range(0, len(order), batch_size):
            chunk = [rows[i] for i in order[start : start + batch_size]]
            batch = tokenizer(
                [r["text"] for r in chunk],
                truncation=True,
                max_length=max_len,
                padding=True,
                return_tensors="pt",
            ).to(device)
            targets = torch.tensor([label_index[r["label"]] for r in chunk], device=device)
            out = model(**batch, labels=targets)
            optimizer.zero_grad()
            out.loss.backward()
            optimizer.step()

    checkpoint = os.path.join(args.out, "checkpoint")
    os.makedirs(checkpoint, exist_ok=True)
    model.save_pretrained(checkpoint)
    tokenizer.save_pretrained(checkpoint)
    write_json(os.path.join(args.out, "labels.json"), labels)


def cmd_embed(args):
    require_ml()
    import torch
    from transformers import AutoModel, AutoTokenizer

    device = "cuda" if torch.cuda.is_available() else "cpu"
    tokenizer = AutoTokenizer.from_pretrained(args.model)
    model = AutoModel.from_pretrained(args.model)
    model.to(device)
    model.eval()

    with open(args.texts, encoding="utf-8") as handle:
        texts = json.load(handle)
    vectors = []
    with torch.no_grad():
        for start in range(0, len(texts), args.batch_size):
            chunk = texts[start : start + args.batch_size]
            batch = tokenizer(
                chunk,
                truncation=True,
                max_length=args.max_len,
                padding=True,
                return_tensors="pt",
            ).to(device)
            hidden = model(**batch).last_hidden_state
            mask = batch["attention_mask"].unsqueeze(-1).float()
            pooled = (hidden * mask).sum(1) / mask.sum(1).clamp(min=1.0)
            vectors.extend(pooled.double().cpu().tolist())
    write_json(args.out, vectors)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True)

    p = sub.add_parser("train")
    p.add_argument("--pairs", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score")
    p.add_argument("--model", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=64)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("classify-train")
    p.add_argument("--records", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_classify_train)

    p = sub.add_parser("embed")
    p.add_argument("--model", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=64)
    p.set_defaults(func=cmd_embed)

    args = parser.parse_args()
    args.func(args)


if __name__ == "__main__":
    main()
