#!/usr/bin/env python3
"""Convert the publicly released LIVE BRISQUE libsvm model (`allmodel`) and its
feature range table (`allrange`) into the plain-text model format read by
`cgvm_core::metrics::brisque::SvrModel`.

Usage: convert_brisque_model.py ALLMODEL ALLRANGE OUT
"""
import sys


def read_ranges(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 3 and parts[0].isdigit():
                rows.append((float(parts[1]), float(parts[2])))
    if len(rows) != 36:
        raise SystemExit(f"expected 36 range rows, found {len(rows)}")
    return rows


def main():
    model_path, range_path, out_path = sys.argv[1:4]
    gamma = rho = None
    svs = []
    in_sv = False
    with open(model_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if in_sv:
                parts = line.split()
                coef = float(parts[0])
                values = [0.0] * 36
                for tok in parts[1:]:
                    idx, val = tok.split(":")
                    values[int(idx) - 1] = float(val)
                svs.append((coef, values))
            elif line == "SV":
                in_sv = True
            elif line.startswith("gamma "):
                gamma = float(line.split()[1])
            elif line.startswith("rho "):
                rho = float(line.split()[1])
    ranges = read_ranges(range_path)
    with open(out_path, "w") as out:
        out.write("# BRISQUE epsilon-SVR, RBF kernel, trained on LIVE IQA (release model)\n")
        out.write(f"GAMMA\n{gamma!r}\n")
        out.write(f"RHO\n{rho!r}\n")
        out.write("RANGES\n")
        for lo, hi in ranges:
            out.write(f"{lo!r} {hi!r}\n")
        out.write("SV\n")
        for coef, values in svs:
            out.write(" ".join([repr(coef)] + [repr(v) for v in values]) + "\n")


if __name__ == "__main__":
    main()
