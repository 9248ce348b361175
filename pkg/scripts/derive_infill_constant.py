"""Exact argmax-infilling accuracy on the 2-state 0.9-chain.

Setting: length-3 sequences whose end tokens agree, middle token masked and
filled with the argmax of the oracle posterior. Enumerates every sequence
with exact rational arithmetic; the printed value is frozen in
tests/test_metrics.py.
"""

import itertools
from fractions import Fraction

import numpy as np

from stardiff.corpus import sticky_chain
from stardiff.denoiser import MarkovOracleDenoiser


def main():
    pi = [Fraction(1, 2)] * 2
    A = [[Fraction(9, 10), Fraction(1, 10)], [Fraction(1, 10), Fraction(9, 10)]]
    den = MarkovOracleDenoiser(sticky_chain(2, 0.9))
    hit = Fraction(0)
    total = Fraction(0)
    for x in itertools.product(range(2), repeat=3):
        if x[0] != x[2]:
            continue
        p = pi[x[0]] * A[x[0]][x[1]] * A[x[1]][x[2]]
        guess = int(np.argmax(den.denoise([x[0], 2, x[2]])[0, 1, :2]))
        total += p
        hit += p * (guess == x[1])
    acc = hit / total
    print(f"accuracy = {acc} = {float(acc):.15f}")


if __name__ == "__main__":
    main()
