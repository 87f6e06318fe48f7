"""Generates crates/core/data/silica_eps_ixi.dat.

Four-oscillator Lorentz fit for amorphous SiO2 (three IR phonon bands and one
effective UV electronic band), evaluated on the imaginary axis.
"""
import math
import pathlib

OSC = [
    # strength, resonance [rad/s], damping [rad/s]
    (0.829, 8.7e13, 7.0e12),
    (0.095, 1.51e14, 1.5e13),
    (0.797, 2.04e14, 1.2e13),
    (1.098, 2.0e16, 0.0),
]


def eps(xi):
    return 1.0 + sum(f * w * w / (w * w + xi * xi + g * xi) for f, w, g in OSC)


def main():
    out = pathlib.Path(__file__).resolve().parents[2] / "crates/core/data/silica_eps_ixi.dat"
    lines = [
        "# fused silica, eps(i xi) from a four-oscillator Lorentz model",
        "# oscillators (strength, resonance rad/s, damping rad/s):",
    ]
    lines += [f"#   {f} {w:.3e} {g:.3e}" for f, w, g in OSC]
    lines.append("# xi_rad_per_s eps_i_xi")
    n = 200
    for i in range(n):
        xi = 10 ** (11 + 7 * i / (n - 1))
        lines.append(f"{xi:.9e} {eps(xi):.12e}")
    out.write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
