"""Command-line entry point: embed, adv-embed, extract, gradmap, train, evaluate."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import cnn
from .adversarial import (CodeParams, extract_message, generate_adversarial_stego,
                          generate_plain_stego)
from .distortion import compute_costs, cost_heatmap
from .errors import PayloadError
from .harness import (Experiment, emit_report, load_corpus, run_protocol, split_indices,
                      synthesize_corpus, _direction_seed, _message_rng)
from .image import GrayImage, load_pgm, save_pgm
from .stc import bits_to_bytes, bytes_to_bits, message_length

log = logging.getLogger("advstego")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_code_flags(p):
    p.add_argument("--h", type=int, default=7, help="STC constraint height")
    p.add_argument("--stc-seed", type=int, default=0, help="seed of the STC sub-matrix")


def _add_message_flags(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--message", help="message as a hex string")
    g.add_argument("--message-file", help="read raw message bytes from a file")
    p.add_argument("--alpha", type=float, help="payload rate; the message is zero-padded to round(alpha*n) bits")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="advstego", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="plain STC embedding with random ±1 directions")
    p.add_argument("--cover", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=["hill", "suniward"], default="hill")
    p.add_argument("--direction-seed", type=int, default=0)
    p.add_argument("--dump-costs", help="write the cost map as a PGM heat image")
    _add_message_flags(p)
    _add_code_flags(p)

    p = sub.add_parser("adv-embed", help="STC embedding steered by the steganalyzer gradient")
    p.add_argument("--cover", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algo", choices=["hill", "suniward"], default="hill")
    p.add_argument("--plan", help="write the modification plan as JSON")
    p.add_argument("--dump-costs", help="write the cost map as a PGM heat image")
    _add_message_flags(p)
    _add_code_flags(p)

    p = sub.add_parser("extract", help="print the embedded message as hex")
    p.add_argument("--stego", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--bits", type=int)
    g.add_argument("--nbytes", type=int)
    p.add_argument("--truncate", type=int, help="only print the first N bytes")
    _add_code_flags(p)

    p = sub.add_parser("gradmap", help="dump the cover-gradient sign map as PGM (0 = -1, 255 = +1)")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a steganalyzer on plain stegos of the training split")
    p.add_argument("--spec", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus-dir")

    p = sub.add_parser("evaluate", help="run the detection-error protocol and write a CSV report")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--corpus-dir")
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _message_bits(args, n: int) -> np.ndarray:
    if args.message is not None:
        try:
            data = bytes.fromhex(args.message)
        except ValueError:
            raise UsageError(f"--message is not valid hex: {args.message!r}")
    else:
        with open(args.message_file, "rb") as f:
            data = f.read()
    bits = bytes_to_bits(data)
    if args.alpha is not None:
        l = message_length(args.alpha, n)
        if len(bits) > l:
            raise PayloadError(f"message has {len(bits)} bits, alpha={args.alpha} carries {l}")
        bits = np.concatenate([bits, np.zeros(l - len(bits), dtype=np.uint8)])
    if len(bits) == 0:
        raise PayloadError("empty message")
    return bits


def _cmd_embed(args):
    cover = load_pgm(args.cover)
    bits = _message_bits(args, cover.size)
    costs = compute_costs(cover, args.algo)
    if args.dump_costs:
        save_pgm(cost_heatmap(costs), args.dump_costs)
    stego, plan = generate_plain_stego(cover, bits, costs=costs, code=CodeParams(args.h, args.stc_seed),
                                       direction_seed=args.direction_seed)
    save_pgm(stego, args.out)
    print(f"embedded {len(bits)} bits with {len(plan.positions)} changes")


def _cmd_adv_embed(args):
    cover = load_pgm(args.cover)
    model = cnn.load_model(args.model)
    bits = _message_bits(args, cover.size)
    costs = compute_costs(cover, args.algo)
    if args.dump_costs:
        save_pgm(cost_heatmap(costs), args.dump_costs)
    stego, plan = generate_adversarial_stego(cover, bits, model, costs=costs,
                                             code=CodeParams(args.h, args.stc_seed))
    save_pgm(stego, args.out)
    if args.plan:
        with open(args.plan, "w") as f:
            f.write(plan.to_json(cover.shape))
    pc_cover, pc_adv = cnn.predict_proba(model, [cover, stego])[:, cnn.COVER]
    print(f"embedded {len(bits)} bits with {len(plan.positions)} changes; "
          f"p_cover {pc_cover:.4f} -> {pc_adv:.4f}")


def _cmd_extract(args):
    stego = load_pgm(args.stego)
    if args.bits is not None:
        l = args.bits
    elif args.nbytes is not None:
        l = 8 * args.nbytes
    else:
        l = message_length(args.alpha, stego.size)
    bits = extract_message(stego, l, CodeParams(args.h, args.stc_seed))
    data = bits_to_bytes(bits)
    if args.truncate is not None:
        data = data[:args.truncate]
    print(data.hex())


def _cmd_gradmap(args):
    model = cnn.load_model(args.model)
    img = load_pgm(args.image)
    signs = cnn.sign_map(cnn.input_gradient(model, img, cnn.COVER), img)
    save_pgm(GrayImage(np.where(signs > 0, 255, 0).astype(np.uint8)), args.out)


def _covers(exp, corpus_dir):
    return load_corpus(corpus_dir) if corpus_dir else synthesize_corpus(exp.dataset)


def _cmd_train(args):
    from .adversarial import random_message
    exp = Experiment.from_json(args.spec)
    covers = _covers(exp, args.corpus_dir)
    train_idx, _ = split_indices(exp.dataset, len(covers))
    ai = exp.dataset.payload_rates.index(args.alpha) if args.alpha in exp.dataset.payload_rates else -1
    stegos = []
    for i in train_idx:
        bits = random_message(covers[i].size, args.alpha, _message_rng(exp.dataset, ai, i))
        stegos.append(generate_plain_stego(covers[i], bits, exp.algo, exp.code,
                                           _direction_seed(exp.dataset, ai, i))[0])
    model = cnn.train(exp.train, [covers[i] for i in train_idx], stegos, log=log.info)
    cnn.save_model(model, args.out)
    print(f"trained on {len(train_idx)} pairs; final loss {model.history[-1] if model.history else float('nan'):.4f}")


def _cmd_evaluate(args):
    exp = Experiment.from_json(args.spec)
    covers = _covers(exp, args.corpus_dir)
    report = run_protocol(exp.dataset, exp.train, exp.algo, covers=covers, code=exp.code,
                          jobs=args.jobs, log=log.info)
    emit_report(report, args.out)
    for r in sorted(report.rows, key=lambda r: (r.alpha, r.set)):
        print(f"{r.algo} alpha={r.alpha:g} {r.set:<11} P_FA={r.p_fa:.4f} P_MD={r.p_md:.4f} P_E={r.p_e:.4f}")


COMMANDS = {
    "embed": _cmd_embed, "adv-embed": _cmd_adv_embed, "extract": _cmd_extract,
    "gradmap": _cmd_gradmap, "train": _cmd_train, "evaluate": _cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"advstego: error: {e}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"advstego: error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError, ArithmeticError, RuntimeError, KeyError) as e:
        print(f"advstego: {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


def entry_point():
    sys.exit(main())
