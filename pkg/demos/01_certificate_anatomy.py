"""Walk through the offline half of the pipeline on the 4-state plant.

The monitor's entire runtime guarantee hangs on one offline object: the
invariant ellipsoid certificate.  This script builds it piece by piece —
estimator calibration, detector threshold, noise energy bound, decay-rate
grid — and then shows the integrity machinery that ties the certificate
to the exact model and estimator it was solved for.

Run from the repository root:  python3 demos/01_certificate_anatomy.py
"""

import dataclasses
import tempfile
from pathlib import Path

import numpy as np

from reachmon.errors import CertificateError
from reachmon.estimation import calibrate_kalman, chi_square_threshold
from reachmon.io import load_certificate, load_model, save_certificate, validate_certificate
from reachmon.reachability import compute_certificate, noise_energy_bound, verify_certificate

ROOT = Path(__file__).resolve().parent.parent
MODEL_PATH = ROOT / "models" / "synth_small.json"

model = load_model(MODEL_PATH)
print(f"plant: {model.n_states} states, {model.n_sensors} sensors, "
      f"{model.n_inputs} inputs, dt = {model.dt} s")

# --- estimator -----------------------------------------------------------
cal = calibrate_kalman(model.a, model.c, model.process_cov, model.measurement_cov)
print(f"\nsteady-state filter: spectral radius of (A - L C) = "
      f"{cal.estimator_radius:.4f}  (< 1: stable)")
print(f"innovation covariance diag: {np.diag(cal.innovation_cov).round(4)}")

# --- detector ------------------------------------------------------------
beta = 0.05
tau = chi_square_threshold(model.n_sensors, beta)
print(f"\ndetector threshold for a {beta:.0%} alarm rate on "
      f"{model.n_sensors} sensors: tau = {tau:.4f}")

# --- process-noise energy bound ------------------------------------------
p = 0.99
bound = noise_energy_bound(model.process_cov, p)
print(f"process-noise bound: P(||w||^2 <= {bound.value:.5f}) = {p}"
      + (f"  (MC std err {bound.std_error:.2g})" if bound.std_error else ""))

# --- the certificate itself ----------------------------------------------
cert = compute_certificate(model, cal, beta=beta, p=p, delta_h=0.05)
eigs = np.linalg.eigvalsh(cert.pi)
print(f"\ncertificate: decay rate b* = {cert.b_star}, "
      f"objective = {cert.objective:.4f}")
print(f"error-ellipsoid semi-axes: {np.sqrt(eigs).round(3)}")
print(f"stored-shape recheck margin: {verify_certificate(cert, model.a):.2e} (>= 0)")

# --- integrity: the certificate refuses to outlive its inputs ------------
with tempfile.TemporaryDirectory() as tmp:
    cert_path = Path(tmp) / "cert.json"
    save_certificate(cert, cert_path, MODEL_PATH)
    loaded, hashes = load_certificate(cert_path)
    validate_certificate(loaded, hashes, model, MODEL_PATH)
    print("\nround-trip through JSON: certificate validates against the model file")

    forged = dataclasses.replace(loaded, tau=loaded.tau * 1.02)
    try:
        validate_certificate(forged, hashes, model, MODEL_PATH)
    except CertificateError as exc:
        print(f"tampering with tau is caught: {exc}")
