"""Tour of the four source-state families and their g2(0) labels.

Each family prepares a density matrix, a monitored mode, and an exact
g2(0) label.  Where a closed-form expression exists, it is compared with the
numeric moment Tr[a^dag a^dag a a rho] / <a^dag a>^2 on the truncated space.
"""

import math

from g2qrc.hilbert import second_order_coherence
from g2qrc.sources import (
    CoherentTlsMixSpec,
    CvMixtureSpec,
    EmitterCavitySpec,
    PhotonAddedSpec,
    build_coherent_tls_mix,
    build_cv_mixture,
    build_emitter_cavity,
    build_photon_added,
    cv_mixture_g2_analytic,
)

print("=== Fock/coherent/thermal mixture ===")
for theta, phi in ((0.2, 0.4), (0.8, 0.8), (1.4, 1.2)):
    spec = CvMixtureSpec(theta=theta, phi=phi)
    src = build_cv_mixture(spec)
    numeric = second_order_coherence(src.rho, src.monitored_op)
    print(f"theta={theta:.1f} phi={phi:.1f}: g2 analytic {src.label_g2:.6f} "
          f"numeric {numeric:.6f}  <n>={src.label_occupation:.4f}")

print("\n=== Emitter in a Kerr cavity (steady state) ===")
for delta_a in (-1.0, 0.0, 1.6, 4.0):
    src = build_emitter_cavity(EmitterCavitySpec(delta_a=delta_a))
    regime = ("superbunched" if src.label_g2 > 2
              else "bunched" if src.label_g2 > 1 else "antibunched")
    print(f"delta_a={delta_a:+.1f}: g2={src.label_g2:8.3f} "
          f"n_a={src.label_occupation:.5f}  ({regime})")

print("\n=== Photon-added squeezed states ===")
for r, m in ((0.3, 0), (0.3, 1), (0.5, 2), (0.5, 3)):
    src = build_photon_added(PhotonAddedSpec(r=r, m=m))
    print(f"r={r} m={m}: g2={src.label_g2:.6f}  <n>={src.label_occupation:.4f}")

print("\n=== Coherent + two-level emitter mixed on a beam splitter ===")
for delta_a in (-3.0, -0.5, 1.0):
    src = build_coherent_tls_mix(CoherentTlsMixSpec(delta_a=delta_a))
    print(f"delta_a={delta_a:+.1f}: g2(o2)={src.label_g2:.4f} "
          f"<n>(o2)={src.label_occupation:.4f}")
