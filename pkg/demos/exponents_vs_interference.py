"""Edge and cloud error exponents as inter-cell interference grows.

Edge detection loses its exponent once the neighbour's signal swamps the
cell's own, while the cloud, which sees both cells, keeps a positive one.
Uses a zero-mean interfering channel, the usual convention for exponent sweeps.
"""

from tbma import default_config, exponent_report, solve_quantization_variance


def main():
    print(f"{'sigma2_G':>10} {'E_edge':>10} {'E_cloud':>10} {'sigma2_q':>12}")
    for s2g in (0.1, 1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6):
        cfg = default_config(mu_g=0.0, sigma2_g=s2g)
        spec = solve_quantization_variance(cfg)
        rep = exponent_report(cfg, spec)
        print(f"{s2g:10.0e} {rep.e_edge:10.4f} {rep.e_cloud:10.4f} {spec.sigma2_q1:12.4e}")

    print("\nfronthaul capacity needed for the cloud to overtake the edge (sigma2_G = 1)")
    for c in (0.25, 0.5, 1.0, 2.0, 5.0):
        rep = exponent_report(default_config(mu_g=0.0, fronthaul_capacity=c))
        mark = "cloud" if rep.e_cloud >= rep.e_edge else "edge"
        print(f"  C={c:<5} E_edge={rep.e_edge:.4f} E_cloud={rep.e_cloud:.4f} -> {mark}")


if __name__ == "__main__":
    main()
