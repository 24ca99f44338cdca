"""Experiment driver: BER and ACLR sweeps, constellation export, and the CLI.

Every sweep pairs all schemes on identical channel, noise, and amplifier
realizations (common random numbers): per point and chunk, a seed sequence
derived from (seed, point, chunk) drives the draws, so re-running any single
scheme reproduces its column byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import grid, rxbaseline, txchain
from .channel import NoiseSpec, apply_channel
from .grid import Constellation, Numerology, normalize_constellation, save_constellation_csv
from .neural import no_grad
from .neural.checkpoint import load_checkpoint
from .pa import PaModel, fit_default_pa, pa_apply
from .training import (
    ACLR_CAP_DB,
    EMISSION_FLOOR,
    OobSpec,
    TrainConfig,
    band_powers,
    link_forward,
    load_link,
    load_train_config,
    pair_to_complex,
    sample_batch,
    train,
)
from .txchain import PilotConfig

SCHEMES = ("practical", "genie", "learned_no_txcnn", "learned_txcnn")

# CSV column names, in canonical order, per scheme
_BER_COLUMNS = (("practical", "practical"), ("genie", "perfect"),
                ("learned_txcnn", "ML"), ("learned_no_txcnn", "ML_no_txcnn"))
_ACLR_COLUMNS = (("conventional", "perfect"), ("learned_no_txcnn", "MLnotdd"),
                 ("learned_txcnn", "ML"))

_LOW_CONFIDENCE_ERRORS = 100

# disjoint point-seed namespaces for the two sweep kinds
_SNR_SPACE = 1 << 20
_BACKOFF_SPACE = 1 << 21


@dataclass(frozen=True)
class SweepSpec:
    """Grid of evaluation points and the scheme set to run on them."""

    snr_points_db: tuple = tuple(float(s) for s in range(0, 31, 2))
    backoff_points_db: tuple = (10.0, 12.5, 15.0, 17.5, 20.0, 22.5, 25.0)
    fixed_snr_db: float = 24.0
    slots_per_point: int = 2000
    schemes: tuple = SCHEMES

    def __post_init__(self):
        if not self.snr_points_db or not self.backoff_points_db:
            raise ValueError("sweep point lists must be nonempty")
        if self.slots_per_point < 0:
            raise ValueError("slots_per_point must be >= 0")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ValueError(f"unknown schemes {sorted(unknown)}")


@dataclass(frozen=True)
class AclrReport:
    inband_power: float
    oob_power: float
    aclr_db: float


def _ratio_db(inband: float, oob: float) -> float:
    inband = max(inband, EMISSION_FLOOR)
    if oob < inband * 10.0 ** (-ACLR_CAP_DB / 10.0):
        return ACLR_CAP_DB
    return min(10.0 * np.log10(inband / oob), ACLR_CAP_DB)


def measure_aclr(x_pa: np.ndarray, spec: OobSpec, num: Numerology) -> AclrReport:
    """Adjacent-band leakage of a unit-power PA output, pooled over slots."""
    if spec.m_oob != num.ifft_size - num.n_subcarriers:
        raise ValueError("OOB bin set does not match the numerology")
    inband, oob = band_powers(x_pa, num)
    ib, ob = float(np.mean(inband)), float(np.mean(oob))
    return AclrReport(inband_power=ib, oob_power=ob, aclr_db=_ratio_db(ib, ob))


def rotation_matching_distance(points: np.ndarray) -> float:
    """Min over 90/180/270 degree rotations of the mean assignment distance.

    Zero for any constellation with quarter-turn symmetry (square QAM);
    strictly positive asymmetry is what makes pilotless phase recovery work.
    """
    points = np.asarray(points, dtype=np.complex128).ravel()
    best = np.inf
    for rot in (1j, -1.0, -1j):
        cost = np.abs(points[:, None] - (points * rot)[None, :])
        rows, cols = linear_sum_assignment(cost)
        best = min(best, float(cost[rows, cols].mean()))
    return best


def export_constellation(checkpoint: str | Path, out_csv: str | Path) -> float:
    """Write the normalized learned constellation as x,y,label CSV rows.

    Returns the rotation-matching asymmetry metric of the exported points.
    """
    arrays = load_checkpoint(checkpoint)
    if "const.re" not in arrays or "const.im" not in arrays:
        raise ValueError("checkpoint has no constellation parameters")
    const = normalize_constellation(Constellation(
        arrays["const.re"].astype(np.float64),
        arrays["const.im"].astype(np.float64)))
    save_constellation_csv(const, out_csv)
    return rotation_matching_distance(const.points)


def _select_data(grid_vals: np.ndarray, data_mask: np.ndarray) -> np.ndarray:
    """Pull data-RE entries in the column-major order the TX consumed them."""
    return np.swapaxes(grid_vals, 0, 1)[data_mask.T]


class _Tally:
    """Error/bit counts and band powers accumulated over sweep chunks."""

    def __init__(self):
        self.errors: dict[str, int] = {}
        self.bits: dict[str, int] = {}
        self.inband: dict[str, float] = {}
        self.oob: dict[str, float] = {}
        self.slots: dict[str, int] = {}

    def add_ber(self, scheme: str, errors: int, bits: int) -> None:
        self.errors[scheme] = self.errors.get(scheme, 0) + errors
        self.bits[scheme] = self.bits.get(scheme, 0) + bits

    def add_power(self, scheme: str, inband, oob) -> None:
        inband = np.atleast_1d(inband)
        oob = np.atleast_1d(oob)
        self.inband[scheme] = self.inband.get(scheme, 0.0) + float(inband.sum())
        self.oob[scheme] = self.oob.get(scheme, 0.0) + float(oob.sum())
        self.slots[scheme] = self.slots.get(scheme, 0) + inband.size

    def ber(self, scheme: str) -> float:
        return self.errors[scheme] / self.bits[scheme]

    def aclr(self, scheme: str) -> float:
        n = self.slots[scheme]
        return _ratio_db(self.inband[scheme] / n, self.oob[scheme] / n)


def _conventional_slots(batch, cfg_pt: TrainConfig, conv_bits: np.ndarray,
                        qam: Constellation, pilots: PilotConfig,
                        schemes, tally: _Tally, want_aclr: bool) -> None:
    """Pilot-aided QAM transmission and both baseline receivers, slotwise."""
    num = cfg_pt.numerology()
    beta = 10.0 ** (-cfg_pt.backoff_db / 20.0)
    data_mask = ~pilots.pilot_mask(num)
    noise_c = pair_to_complex(batch.noise).reshape(batch.size, -1)
    for i in range(batch.size):
        symbols = grid.map_bits(conv_bits[i], qam)
        rgrid = txchain.assemble_slot(symbols, pilots, num)
        wave_raw = txchain.add_cp(txchain.ofdm_modulate(rgrid.values, num), num)
        wave, scale = txchain.normalize_unit_power(wave_raw, return_scale=True)
        u = wave * beta
        v = pa_apply(batch.pa_model, u)
        p = float(txchain.mean_power(v))
        x_pa = v / np.sqrt(p)
        y = apply_channel(x_pa, batch.realizations[i], NoiseSpec.noiseless(), num)
        rx = rxbaseline.cp_remove_fft(y + noise_c[i], num)
        sigma2 = float(batch.sigma2[i])
        truth = conv_bits[i].astype(bool)
        if "practical" in schemes:
            llr = rxbaseline.practical_receive(rx, pilots, sigma2, num, qam)
            sel = _select_data(llr, data_mask)
            tally.add_ber("practical", int(((sel > 0) != truth).sum()), truth.size)
        if "genie" in schemes:
            # Bussgang decomposition: the in-band component of the PA output
            # is g_b * u; fold the normalization and backoff scales on top
            g_b = np.vdot(u, v) / np.vdot(u, u)
            g_chain = complex(scale * beta * g_b / np.sqrt(p))
            llr = rxbaseline.genie_receive(rx, batch.realizations[i], sigma2,
                                           num, qam, tx_gain=g_chain)
            sel = _select_data(llr, data_mask)
            tally.add_ber("genie", int(((sel > 0) != truth).sum()), truth.size)
        if want_aclr:
            tally.add_power("conventional", *band_powers(x_pa, num))


def _eval_point(links: dict, cfg: TrainConfig, schemes, snr_db: float,
                backoff_db: float, slots: int, seed: int, point_key: int,
                base_pa: PaModel, want_aclr: bool) -> _Tally:
    """All requested schemes on `slots` fresh slots at one sweep point."""
    num = cfg.numerology()
    pilots = PilotConfig()
    qam = normalize_constellation(grid.build_qam_constellation(num.bits_per_symbol))
    n_data = int((~pilots.pilot_mask(num)).sum())
    tally = _Tally()
    conventional = {"practical", "genie"} & set(schemes)
    remaining, chunk_idx = slots, 0
    while remaining > 0:
        q = min(cfg.batch_size, remaining)
        rng = np.random.default_rng(np.random.SeedSequence(
            (seed, point_key, chunk_idx)))
        cfg_pt = dataclasses.replace(cfg, batch_size=q, snr_min_db=snr_db,
                                     snr_max_db=snr_db, backoff_db=backoff_db)
        batch = sample_batch(cfg_pt, rng, base_pa)
        # drawn unconditionally to keep every scheme's stream reproducible
        conv_bits = rng.integers(0, 2, (q, n_data, num.bits_per_symbol))
        if conventional or want_aclr:
            _conventional_slots(batch, cfg_pt, conv_bits, qam, pilots,
                                conventional, tally, want_aclr)
        for scheme in ("learned_txcnn", "learned_no_txcnn"):
            if scheme not in schemes:
                continue
            with no_grad():
                out = link_forward(links[scheme], batch, cfg_pt,
                                   measure_emissions=False)
            errs = int(((out.logits.data > 0) != (batch.bits > 0)).sum())
            tally.add_ber(scheme, errs, int(batch.bits.size))
            if want_aclr:
                x_c = pair_to_complex(out.x_pa.data)
                tally.add_power(scheme, *band_powers(x_c, num))
        remaining -= q
        chunk_idx += 1
    return tally


def _require_links(schemes, links: dict) -> None:
    for scheme in schemes:
        if scheme.startswith("learned_") and scheme not in links:
            raise ValueError(f"scheme {scheme!r} needs a checkpoint")


def _write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)]
    lines += [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _fmt(x: float) -> str:
    return f"{x:.9e}"


def _fmt_point(x: float) -> str:
    return f"{x:g}"


def _point_seed(space: int, value: float) -> int:
    return space + int(round(1000.0 * value))


def run_ber_snr_sweep(sweep: SweepSpec, links: dict, cfg: TrainConfig,
                      out_dir: str | Path, seed: int | None = None) -> list:
    """BER vs SNR for every requested scheme; writes bers.csv (+ meta).

    The meta sidecar lists raw error/bit counts and flags points with fewer
    than 100 observed errors as low confidence.
    """
    _require_links(sweep.schemes, links)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    base_pa = fit_default_pa()
    columns = [(s, c) for s, c in _BER_COLUMNS if s in sweep.schemes]
    rows, meta, results = [], [], []
    for snr in sweep.snr_points_db:
        if sweep.slots_per_point == 0:
            break
        tally = _eval_point(links, cfg, sweep.schemes, snr, cfg.backoff_db,
                            sweep.slots_per_point, seed,
                            _point_seed(_SNR_SPACE, snr), base_pa,
                            want_aclr=False)
        rows.append([_fmt_point(snr)] + [_fmt(tally.ber(s)) for s, _ in columns])
        for s, col in columns:
            meta.append([_fmt_point(snr), col, str(tally.errors[s]),
                         str(tally.bits[s]),
                         str(int(tally.errors[s] < _LOW_CONFIDENCE_ERRORS))])
        results.append({"snr_db": snr,
                        **{s: tally.ber(s) for s, _ in columns}})
    _write_csv(out / "bers.csv", ["SNR"] + [c for _, c in columns], rows)
    _write_csv(out / "bers.meta.csv",
               ["SNR", "scheme", "errors", "bits", "low_confidence"], meta)
    return results


def run_backoff_sweep(sweep: SweepSpec, links: dict, cfg: TrainConfig,
                      out_dir: str | Path, seed: int | None = None) -> list:
    """ACLR and BER vs PA input backoff at the sweep's fixed SNR.

    Writes aclrs.csv (`backoff,perfect,MLnotdd,ML`), ber_backoff.csv, and a
    ber_backoff.meta.csv confidence sidecar.
    """
    _require_links(sweep.schemes, links)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    base_pa = fit_default_pa()
    aclr_sources = {"conventional": {"practical", "genie"} & set(sweep.schemes),
                    "learned_no_txcnn": "learned_no_txcnn" in sweep.schemes,
                    "learned_txcnn": "learned_txcnn" in sweep.schemes}
    aclr_columns = [(s, c) for s, c in _ACLR_COLUMNS if aclr_sources[s]]
    ber_columns = [(s, c) for s, c in _BER_COLUMNS if s in sweep.schemes]
    aclr_rows, ber_rows, meta, results = [], [], [], []
    for backoff in sweep.backoff_points_db:
        if sweep.slots_per_point == 0:
            break
        tally = _eval_point(links, cfg, sweep.schemes, sweep.fixed_snr_db,
                            backoff, sweep.slots_per_point, seed,
                            _point_seed(_BACKOFF_SPACE, backoff), base_pa,
                            want_aclr=True)
        aclr_rows.append([_fmt_point(backoff)]
                         + [_fmt(tally.aclr(s)) for s, _ in aclr_columns])
        ber_rows.append([_fmt_point(backoff)]
                        + [_fmt(tally.ber(s)) for s, _ in ber_columns])
        for s, col in ber_columns:
            meta.append([_fmt_point(backoff), col, str(tally.errors[s]),
                         str(tally.bits[s]),
                         str(int(tally.errors[s] < _LOW_CONFIDENCE_ERRORS))])
        results.append({"backoff_db": backoff,
                        "aclr": {s: tally.aclr(s) for s, _ in aclr_columns},
                        "ber": {s: tally.ber(s) for s, _ in ber_columns}})
    _write_csv(out / "aclrs.csv", ["backoff"] + [c for _, c in aclr_columns],
               aclr_rows)
    _write_csv(out / "ber_backoff.csv",
               ["backoff"] + [c for _, c in ber_columns], ber_rows)
    _write_csv(out / "ber_backoff.meta.csv",
               ["backoff", "scheme", "errors", "bits", "low_confidence"], meta)
    return results


def run_selftest(verbose: bool = True) -> int:
    """Fast built-in oracle checks; returns 0 when everything passes."""
    failures = []

    def check(name, fn):
        try:
            fn()
            if verbose:
                print(f"ok - {name}")
        except Exception as exc:  # report and keep going
            failures.append(name)
            if verbose:
                print(f"FAIL - {name}: {exc}")

    def loopback():
        num = Numerology.desk()
        rng = np.random.default_rng(0)
        vals = rng.standard_normal((num.n_subcarriers, num.n_symbols)) \
            + 1j * rng.standard_normal((num.n_subcarriers, num.n_symbols))
        wave = txchain.add_cp(txchain.ofdm_modulate(vals, num), num)
        back = txchain.ofdm_demodulate(txchain.remove_cp(wave, num), num)
        assert np.max(np.abs(back - vals)) < 1e-9

    def pa_oracle():
        model = fit_default_pa()
        rng = np.random.default_rng(1)
        x = 0.4 * (rng.standard_normal(256) + 1j * rng.standard_normal(256))
        naive = sum(c * np.abs(x) ** (2 * j) * x
                    for j, c in enumerate(model.coeffs))
        assert np.max(np.abs(pa_apply(model, x) - naive)) < 1e-12

    def lmmse_pairing():
        rng = np.random.default_rng(2)
        const = normalize_constellation(grid.build_qam_constellation(4))
        h = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        y = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        sigma2 = 0.2
        s_hat = rxbaseline.lmmse_equalize(y, h, sigma2)
        rho, nu = rxbaseline.post_eq_stats(h, sigma2)
        a = rxbaseline.logmap_demap(s_hat, const, nu, gain=rho)
        b = rxbaseline.logmap_demap(y, const, sigma2, gain=h)
        assert np.max(np.abs(a - b)) < 1e-9

    def gradients():
        from .neural.gradcheck import check_gradients
        from .neural.nets import conv2d
        from .neural.tensor import Tensor
        rng = np.random.default_rng(3)
        x = Tensor(rng.standard_normal((1, 5, 4, 2)), requires_grad=True)
        w = Tensor(rng.standard_normal((3, 3, 2, 3)) * 0.3, requires_grad=True)
        err = check_gradients(lambda: (conv2d(x, w) ** 2).sum(),
                              {"x": x, "w": w}, np.random.default_rng(4))
        assert err < 1e-6

    def emissions():
        from .neural.tensor import Tensor
        from .training import emission_energy
        num = Numerology.desk()
        rng = np.random.default_rng(5)
        const = grid.build_qam_constellation(4)
        bits = rng.integers(0, 2, (num.n_subcarriers, num.n_symbols, 4))
        wave = txchain.add_cp(
            txchain.ofdm_modulate(grid.map_bits(bits, const), num), num)
        x = wave.reshape(num.n_symbols, num.symbol_samples)
        pair = np.stack([x.real, x.imag], axis=-1)
        e = emission_energy(Tensor(pair), OobSpec.for_numerology(num), num)
        assert e.item() < 1e-20

    def checkpoints():
        from .neural.checkpoint import save_checkpoint
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.ckpt"
            arrays = {"a": np.arange(12, dtype=np.float32).reshape(3, 4)}
            save_checkpoint(path, arrays)
            back = load_checkpoint(path)
            assert np.array_equal(back["a"], arrays["a"])

    check("ofdm loopback", loopback)
    check("pa polynomial oracle", pa_oracle)
    check("lmmse/log-map pairing", lmmse_pairing)
    check("finite-difference gradients", gradients)
    check("in-band emission floor", emissions)
    check("checkpoint roundtrip", checkpoints)
    return 0 if not failures else 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; we want 1
        raise _UsageError(message)


def _add_common(sub):
    sub.add_argument("--config", help="key=value training/link config file")
    sub.add_argument("--seed", type=int, help="override the config seed")
    sub.add_argument("--out", default="runs", help="output directory")


def _add_sweep_flags(sub):
    sub.add_argument("--scheme", action="append", choices=SCHEMES,
                     help="restrict to a scheme (repeatable)")
    sub.add_argument("--checkpoint", help="learned_txcnn checkpoint path")
    sub.add_argument("--checkpoint-no-txcnn",
                     help="learned_no_txcnn checkpoint path")
    sub.add_argument("--slots", type=int, default=2000,
                     help="validation slots per sweep point")


def build_parser() -> _Parser:
    parser = _Parser(prog="wavelink", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_train = subs.add_parser("train", help="train the learned link")
    _add_common(p_train)

    p_ber = subs.add_parser("eval-ber", help="BER vs SNR sweep")
    _add_common(p_ber)
    _add_sweep_flags(p_ber)
    p_ber.add_argument("--snr-points", help="comma-separated SNR points in dB")

    p_back = subs.add_parser("sweep-backoff", help="BER and ACLR vs backoff")
    _add_common(p_back)
    _add_sweep_flags(p_back)
    p_back.add_argument("--backoff-points",
                        help="comma-separated backoff points in dB")
    p_back.add_argument("--fixed-snr", type=float, default=24.0,
                        help="SNR held fixed across the backoff sweep")

    p_const = subs.add_parser("export-const", help="dump the learned constellation")
    p_const.add_argument("--checkpoint", required=True)
    p_const.add_argument("--out", default="runs")

    subs.add_parser("selftest", help="run fast built-in oracle checks")
    return parser


def _load_cfg(args) -> TrainConfig:
    cfg = load_train_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _sweep_setup(args, cfg: TrainConfig):
    schemes = tuple(dict.fromkeys(args.scheme)) if args.scheme else None
    links = {}
    if args.checkpoint:
        links["learned_txcnn"] = load_link(
            dataclasses.replace(cfg, use_tx_cnn=True), args.checkpoint)
    if args.checkpoint_no_txcnn:
        links["learned_no_txcnn"] = load_link(
            dataclasses.replace(cfg, use_tx_cnn=False), args.checkpoint_no_txcnn)
    if schemes is None:
        schemes = ("practical", "genie") + tuple(
            s for s in ("learned_txcnn", "learned_no_txcnn") if s in links)
    for scheme in schemes:
        if scheme.startswith("learned_") and scheme not in links:
            flag = "--checkpoint" if scheme == "learned_txcnn" else "--checkpoint-no-txcnn"
            raise _UsageError(f"scheme {scheme} requires {flag}")
    return schemes, links


def _parse_points(text: str | None, default: tuple) -> tuple:
    if text is None:
        return default
    try:
        return tuple(float(p) for p in text.split(","))
    except ValueError as exc:
        raise _UsageError(f"bad point list {text!r}") from exc


def cli(argv=None) -> int:
    """Entry point; returns 0 on success, 1 on usage error, 2 on failure."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise _UsageError("a subcommand is required")
        if args.command == "selftest":
            return run_selftest()
        if args.command == "export-const":
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            asym = export_constellation(args.checkpoint, out / "const.csv")
            print(f"wrote {out / 'const.csv'} (asymmetry {asym:.6f})")
            return 0
        cfg = _load_cfg(args)
        if args.command == "train":
            train(cfg, args.out, verbose=True)
            print(f"wrote {Path(args.out) / 'model_final.ckpt'}")
            return 0
        schemes, links = _sweep_setup(args, cfg)
        if args.command == "eval-ber":
            sweep = SweepSpec(snr_points_db=_parse_points(
                args.snr_points, SweepSpec().snr_points_db),
                slots_per_point=args.slots, schemes=schemes)
            run_ber_snr_sweep(sweep, links, cfg, args.out)
            print(f"wrote {Path(args.out) / 'bers.csv'}")
            return 0
        if args.command == "sweep-backoff":
            sweep = SweepSpec(backoff_points_db=_parse_points(
                args.backoff_points, SweepSpec().backoff_points_db),
                fixed_snr_db=args.fixed_snr,
                slots_per_point=args.slots, schemes=schemes)
            run_backoff_sweep(sweep, links, cfg, args.out)
            print(f"wrote {Path(args.out) / 'aclrs.csv'}")
            return 0
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
