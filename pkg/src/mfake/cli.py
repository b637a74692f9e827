"""Command-line harness.

Subcommands mirror the deployment lifecycle: rc-setup issues the center,
register-user / register-sp enroll parties into directories of binary
records, run-session drives a full key exchange (in-process or over TCP),
tamper-test and rate-sweep produce CSV reports with rendered figures next
to them, and revoke maintains the public revocation list.

Every flag can also come from a --config file of flat key=value lines
(keys are the long option names, dashes or underscores). --seed fixes all
randomness drawn by this process.
"""

from __future__ import annotations

import argparse
import os
import random
import sys
import time

import numpy as np

from . import biosim, groups
from .errors import MfakeError
from .harness import (
    SpInputs,
    UserInputs,
    connect_session,
    fingerprint,
    run_session,
    serve_session,
    tamper_all_bytes,
    tamper_random_flips,
)
from .mffe import SecretBinding, mffe_gen, mffe_rep
from .pki import (
    RevocationList,
    UserDeviceRecord,
    device_record_from_bytes,
    device_record_to_bytes,
    params_from_bytes,
    params_to_bytes,
    rc_secret_from_bytes,
    rc_secret_to_bytes,
    rc_setup,
    register_sp,
    register_user,
    sp_record_from_bytes,
    sp_record_to_bytes,
)
from .protocol import Phase
from .wire import mutual_auth_bytes, unilateral_auth_bytes

PARAMS_FILE = "params.bin"
RC_SECRET_FILE = "rc_secret.bin"
REVOKED_FILE = "revoked.txt"
DEVICE_FILE = "device.bin"
TEMPLATE_FILE = "template.csv"
SP_FILE = "sp.bin"


def _rngs(seed):
    if seed is None:
        return random.SystemRandom(), np.random.default_rng()
    return random.Random(seed), np.random.default_rng(seed)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _load_params(rc_dir):
    return params_from_bytes(_read(os.path.join(rc_dir, PARAMS_FILE)))


def _load_rc(rc_dir):
    params = _load_params(rc_dir)
    return rc_secret_from_bytes(_read(os.path.join(rc_dir, RC_SECRET_FILE)), params)


def _save_rc(rc_dir, rc) -> None:
    _write(os.path.join(rc_dir, RC_SECRET_FILE), rc_secret_to_bytes(rc))


def _load_device(user_dir, group):
    device = device_record_from_bytes(_read(os.path.join(user_dir, DEVICE_FILE)), group)
    rows = biosim.load_features_csv(os.path.join(user_dir, TEMPLATE_FILE))
    if len(rows) != 1:
        raise MfakeError(f"expected one template row, found {len(rows)}")
    return device, rows[0][1]


def _host_port(value: str):
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def cmd_rc_setup(args) -> int:
    rng, _ = _rngs(args.seed)
    rc = rc_setup(args.n, args.d, args.group, rng)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, PARAMS_FILE), params_to_bytes(rc.params))
    _save_rc(args.out, rc)
    open(os.path.join(args.out, REVOKED_FILE), "a").close()
    print(f"center ready in {args.out}: group={args.group} n={args.n} d={args.d}")
    print(f"verification key: {rc.params.vk_bytes.hex()}")
    return 0


def cmd_register_user(args) -> int:
    rng, nrng = _rngs(args.seed)
    rc = _load_rc(args.rc)
    group = rc.params.group

    if args.features_csv:
        rows = biosim.load_features_csv(args.features_csv)
        labels = [label for label, _ in rows]
        if args.label is None:
            raise MfakeError(f"--label required; available: {labels}")
        matches = [vec for label, vec in rows if label == args.label]
        if not matches:
            raise MfakeError(f"label {args.label!r} not in {labels}")
        template = matches[0]
        if template.shape[0] != rc.params.n:
            raise MfakeError(
                f"feature length {template.shape[0]} != system dimension {rc.params.n}"
            )
    else:
        template = nrng.normal(scale=args.inter_sigma, size=rc.params.n)

    binding = SecretBinding.generate(group, rng)
    credential, sketch = register_user(rc, args.identity, binding.z, template, rng)
    _save_rc(args.rc, rc)

    record = UserDeviceRecord(
        alpha=binding.alpha, uid=credential.uid, sketch=sketch, credential=credential
    )
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, DEVICE_FILE), device_record_to_bytes(record, group))
    biosim.save_features_csv(
        os.path.join(args.out, TEMPLATE_FILE), [(str(credential.uid), template)]
    )
    print(f"user uid={credential.uid} registered into {args.out}")
    print(f"commitment: {group.encode(credential.com_u).hex()}")
    return 0


def cmd_register_sp(args) -> int:
    rng, _ = _rngs(args.seed)
    rc = _load_rc(args.rc)
    group = rc.params.group
    gamma = group.sample_scalar(rng)
    credential = register_sp(
        rc,
        args.identity,
        group.power(group.generator(), gamma),
        group.power(rc.params.h, gamma),
    )
    _save_rc(args.rc, rc)
    os.makedirs(args.out, exist_ok=True)
    _write(os.path.join(args.out, SP_FILE), sp_record_to_bytes(gamma, credential, group))
    print(f"service provider sid={credential.sid} registered into {args.out}")
    return 0


def _session_pieces(args):
    params = _load_params(args.rc)
    group = params.group
    rng, nrng = _rngs(args.seed)
    revocations = RevocationList.load(os.path.join(args.rc, REVOKED_FILE))

    user_inputs = None
    if args.user:
        device, template = _load_device(args.user, group)
        reading = template
        if args.noise > 0:
            reading = template + nrng.normal(scale=args.noise, size=params.n)
        user_inputs = UserInputs(
            device=device,
            reading=reading,
            rng=rng,
            revocations=revocations,
        )
    sp_inputs = None
    if args.sp:
        gamma, credential = sp_record_from_bytes(
            _read(os.path.join(args.sp, SP_FILE)), group
        )
        sp_inputs = SpInputs(
            gamma=gamma,
            credential=credential,
            revocations=revocations,
            rng=random.Random(rng.getrandbits(64)),
        )
    return params, user_inputs, sp_inputs


def _print_state(label, state, unsafe: bool) -> None:
    if state is None:
        print(f"{label}: no session")
        return
    line = f"{label}: {state.phase.value}"
    if state.abort_reason:
        line += f" ({state.abort_reason})"
    if state.session_key is not None:
        shown = state.session_key.hex() if unsafe else fingerprint(state.session_key)
        line += f" key={shown}"
    print(line)


def cmd_run_session(args) -> int:
    if args.listen:
        params, _, sp_inputs = _session_pieces(args)
        if sp_inputs is None:
            raise MfakeError("--listen requires --sp")
        host, port = _host_port(args.listen)
        print(f"serving one session on {host}:{port}")
        state = serve_session(params, sp_inputs, host, port)
        _print_state("sp", state, args.unsafe_print_key)
        return 0 if state is not None and state.phase is Phase.ACCEPTED else 1

    if args.connect:
        params, user_inputs, _ = _session_pieces(args)
        if user_inputs is None:
            raise MfakeError("--connect requires --user")
        host, port = _host_port(args.connect)
        state = connect_session(params, user_inputs, host, port)
        _print_state("user", state, args.unsafe_print_key)
        return 0 if state.phase is Phase.ACCEPTED else 1

    params, user_inputs, sp_inputs = _session_pieces(args)
    if user_inputs is None or sp_inputs is None:
        raise MfakeError("run-session needs both --user and --sp")
    outcome = run_session(params, user_inputs, sp_inputs, transport=args.transport)
    _print_state("user", _as_state(outcome, "user"), args.unsafe_print_key)
    _print_state("sp", _as_state(outcome, "sp"), args.unsafe_print_key)
    if outcome.error:
        print(f"transport: {outcome.error}")
    print(f"session {'accepted' if outcome.accepted else 'failed'}")
    return 0 if outcome.accepted else 1


class _StateView:
    def __init__(self, phase, reason, key):
        self.phase = phase
        self.abort_reason = reason
        self.session_key = key


def _as_state(outcome, side):
    phase = outcome.user_phase if side == "user" else outcome.sp_phase
    if phase is None:
        return None
    reason = outcome.user_abort_reason if side == "user" else outcome.sp_abort_reason
    key = outcome.user_key if side == "user" else outcome.sp_key
    return _StateView(phase, reason, key)


def cmd_tamper_test(args) -> int:
    params, user_inputs, sp_inputs = _session_pieces(args)
    if user_inputs is None or sp_inputs is None:
        raise MfakeError("tamper-test needs both --user and --sp")
    seed = args.seed if args.seed is not None else 0
    records = []
    if args.all_bytes:
        records.extend(tamper_all_bytes(params, user_inputs, sp_inputs, seed=seed))
    if args.random:
        records.extend(
            tamper_random_flips(params, user_inputs, sp_inputs, count=args.random, seed=seed)
        )
    if not records:
        raise MfakeError("nothing to do: pass --all-bytes and/or --random N")

    defeated = sum(r.defeated for r in records)
    if args.out:
        import csv

        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["message_index", "offset", "user_phase", "sp_phase", "aborted", "defeated"]
            )
            for r in records:
                writer.writerow([
                    r.message_index,
                    r.offset,
                    r.outcome.user_phase.value if r.outcome.user_phase else "-",
                    r.outcome.sp_phase.value if r.outcome.sp_phase else "-",
                    "+".join(r.outcome.aborted_parties) or "none",
                    int(r.defeated),
                ])
        print(f"report: {args.out}")
        if not args.no_plot:
            from .plotting import render_tamper_figure

            figure_path = os.path.splitext(args.out)[0] + ".png"
            render_tamper_figure(records, figure_path)
            print(f"figure: {figure_path}")

    print(f"tampered runs: {len(records)}, defeated: {defeated}")
    if defeated != len(records):
        for r in records:
            if not r.defeated:
                print(f"  NOT DEFEATED: message {r.message_index} offset {r.offset}")
        return 1
    print("abort coverage: 100%")
    return 0


def cmd_rate_sweep(args) -> int:
    _, nrng = _rngs(args.seed)
    pop = biosim.sample_population(
        args.n, args.identities, args.inter_sigma, args.noise_sigma, nrng
    )
    if args.grid == "geom":
        grid = np.geomspace(args.d_min, args.d_max, args.points)
    else:
        grid = np.linspace(args.d_min, args.d_max, args.points)
    reports, estimate = biosim.sweep_eer(pop, grid, args.pairs, nrng)
    biosim.reports_to_csv(reports, args.out)
    print(f"report: {args.out}")
    for r in reports:
        print(f"  d={r.d:<10.4g} fmr={r.fmr:<8.4f} fnmr={r.fnmr:<8.4f}")
    if estimate is None:
        print("no crossing on this grid")
    else:
        print(f"EER = {estimate.eer:.4f} at d = {estimate.d:.4g}")
    if not args.no_plot:
        from .plotting import render_sweep_figure

        figure_path = os.path.splitext(args.out)[0] + ".png"
        render_sweep_figure(reports, estimate, figure_path)
        print(f"figure: {figure_path}")
    return 0


def cmd_revoke(args) -> int:
    params = _load_params(args.rc)
    revocations = RevocationList.load(os.path.join(args.rc, REVOKED_FILE))
    if args.user:
        device, _ = _load_device(args.user, params.group)
        encoding = params.group.encode(device.credential.com_u)
    elif args.com:
        encoding = bytes.fromhex(args.com)
    else:
        raise MfakeError("revoke needs --user or --com")
    revocations.revoke(encoding)
    print(f"revoked {encoding.hex()}")
    print(f"list size: {len(revocations.entries)}")
    return 0


def cmd_timing(args) -> int:
    rng, nrng = _rngs(args.seed)

    t0 = time.perf_counter()
    rc = rc_setup(args.n, args.d, args.group, rng)
    t_setup = time.perf_counter() - t0
    params = rc.params
    group = params.group

    binding = SecretBinding.generate(group, rng)
    template = nrng.normal(scale=args.inter_sigma, size=args.n)

    t0 = time.perf_counter()
    credential, sketch = register_user(rc, "timing-user", binding.z, template, rng)
    t_register = time.perf_counter() - t0

    t0 = time.perf_counter()
    key, sketch2 = mffe_gen(params.mffe_pp, template, binding.z, rng)
    t_gen = time.perf_counter() - t0
    t0 = time.perf_counter()
    mffe_rep(params.mffe_pp, template, binding.alpha, sketch2)
    t_rep = time.perf_counter() - t0

    gamma = group.sample_scalar(rng)
    sp_cred = register_sp(
        rc, "timing-sp", group.power(group.generator(), gamma), group.power(params.h, gamma)
    )
    device = UserDeviceRecord(
        alpha=binding.alpha, uid=credential.uid, sketch=sketch, credential=credential
    )

    from .protocol import sp_on_mu1, sp_on_mu2, user_init, user_on_ms1, user_on_ms2

    revocations = RevocationList()
    t_user = t_sp = 0.0
    t0 = time.perf_counter()
    user, mu1 = user_init(params, device)
    t_user += time.perf_counter() - t0
    t0 = time.perf_counter()
    sp, ms1 = sp_on_mu1(params, gamma, sp_cred, mu1, revocations, random.Random(rng.getrandbits(64)))
    t_sp += time.perf_counter() - t0
    t0 = time.perf_counter()
    user, mu2 = user_on_ms1(
        params, user, ms1, template, binding.alpha, sketch, revocations, rng
    )
    t_user += time.perf_counter() - t0
    t0 = time.perf_counter()
    sp, ms2 = sp_on_mu2(params, sp, mu2)
    t_sp += time.perf_counter() - t0
    t0 = time.perf_counter()
    user = user_on_ms2(params, user, ms2)
    t_user += time.perf_counter() - t0

    agreed = user.session_key == sp.session_key and user.phase is Phase.ACCEPTED
    rows = [
        ("system setup", t_setup),
        ("user registration (center side)", t_register),
        ("extractor gen", t_gen),
        ("extractor rep", t_rep),
        ("key exchange, user side", t_user),
        ("key exchange, provider side", t_sp),
        ("key exchange, total", t_user + t_sp),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value * 1000:9.1f} ms")
    print(f"session agreed: {agreed}")
    print(
        f"wire bytes: mutual={mutual_auth_bytes(8 * group.element_size)}"
        f" unilateral={unilateral_auth_bytes(8 * group.element_size)}"
    )
    return 0 if agreed else 1


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _load_config(path) -> dict:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise MfakeError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _build() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="mfake",
        description="multi-factor fuzzy extractor key exchange harness",
    )
    parser.add_argument("--config", help="flat key=value file of flag defaults")
    parser.add_argument("--seed", type=int, default=None, help="fix all randomness")
    # the globals are also accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    def _sub(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = _sub("rc-setup", help="generate center keys and system parameters")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--d", type=float, default=0.25)
    p.add_argument("--group", default="bls12-381")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rc_setup)

    p = _sub("register-user", help="enroll a user (synthetic or CSV template)")
    p.add_argument("--rc", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--identity", default="user")
    p.add_argument("--inter-sigma", type=float, default=1.0)
    p.add_argument("--features-csv", default=None)
    p.add_argument("--label", default=None)
    p.set_defaults(func=cmd_register_user)

    p = _sub("register-sp", help="enroll a service provider")
    p.add_argument("--rc", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--identity", default="sp")
    p.set_defaults(func=cmd_register_sp)

    p = _sub("run-session", help="run one authenticated key exchange")
    p.add_argument("--rc", required=True)
    p.add_argument("--user", default=None)
    p.add_argument("--sp", default=None)
    p.add_argument("--noise", type=float, default=0.0, help="reading noise sigma")
    p.add_argument("--transport", choices=["mem", "tcp"], default="mem")
    p.add_argument("--listen", default=None, metavar="HOST:PORT")
    p.add_argument("--connect", default=None, metavar="HOST:PORT")
    p.add_argument("--unsafe-print-key", action="store_true")
    p.set_defaults(func=cmd_run_session)

    p = _sub("tamper-test", help="byte-flip campaign over the wire messages")
    p.add_argument("--rc", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--sp", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--all-bytes", action="store_true")
    p.add_argument("--random", type=int, default=0, metavar="N")
    p.add_argument("--out", default=None, help="CSV report path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_tamper_test)

    p = _sub("rate-sweep", help="FMR/FNMR sweep over basis lengths")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--identities", type=int, default=200)
    p.add_argument("--inter-sigma", type=float, default=1.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--d-min", type=float, default=3.0)
    p.add_argument("--d-max", type=float, default=18.0)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--pairs", type=int, default=2000)
    p.add_argument("--grid", choices=["geom", "linear"], default="geom")
    p.add_argument("--out", required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_rate_sweep)

    p = _sub("revoke", help="add a commitment to the revocation list")
    p.add_argument("--rc", required=True)
    p.add_argument("--user", default=None)
    p.add_argument("--com", default=None, help="hex commitment encoding")
    p.set_defaults(func=cmd_revoke)

    p = _sub("timing", help="wall-clock per phase at a given dimension")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--d", type=float, default=0.254)
    p.add_argument("--group", default="bls12-381")
    p.add_argument("--inter-sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_timing)

    # record which destinations are boolean switches, per subcommand
    sub_map = {}
    for name, sp in sub.choices.items():
        flags = {}
        for action in sp._actions:
            if action.option_strings:
                flags[action.dest] = isinstance(action, argparse._StoreTrueAction)
        sub_map[name] = flags
    return parser, sub_map


def build_parser() -> argparse.ArgumentParser:
    return _build()[0]


_MAIN_DESTS = {"seed", "config"}
_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def _find_command_index(argv, commands) -> int | None:
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--config", "--seed"):
            i += 2
            continue
        if tok.startswith("-"):
            i += 1
            continue
        return i if tok in commands else None
    return None


def _merge_config(argv: list, config: dict, sub_map: dict) -> list:
    """Turn config entries into argv tokens placed so that explicit flags win:
    main flags go first, subcommand flags directly after the command token."""
    cmd_index = _find_command_index(argv, sub_map.keys())
    if cmd_index is None:
        return argv
    command = argv[cmd_index]
    known = sub_map[command]
    head_extra: list = []
    tail_extra: list = []
    for key, value in config.items():
        flag = "--" + key.replace("_", "-")
        if key in _MAIN_DESTS:
            head_extra += [flag, value]
        elif key in known:
            if known[key]:  # boolean switch
                low = value.lower()
                if low in _TRUTHY:
                    tail_extra.append(flag)
                elif low not in _FALSY:
                    raise MfakeError(f"config {key}: boolean expected, got {value!r}")
            else:
                tail_extra += [flag, value]
        else:
            raise MfakeError(f"config key {key!r} unknown for command {command!r}")
    return head_extra + argv[:cmd_index + 1] + tail_extra + argv[cmd_index + 1:]


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub_map = _build()
    try:
        config_path = None
        for i, tok in enumerate(argv):
            if tok == "--config" and i + 1 < len(argv):
                config_path = argv[i + 1]
            elif tok.startswith("--config="):
                config_path = tok.split("=", 1)[1]
        if config_path:
            argv = _merge_config(argv, _load_config(config_path), sub_map)
        args = parser.parse_args(argv)
        return args.func(args)
    except MfakeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
