"""
Seed deterministici a 64 bit basati sul mixer splitmix64.

Tutto è aritmetica intera modulo 2^64: i valori non dipendono dalla
versione di numpy né dalla piattaforma.
"""
from typing import List

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """Un passo di splitmix64: avanza lo stato di GOLDEN_GAMMA e rimescola."""
    x = (x + GOLDEN_GAMMA) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def splitmix64_stream(seed: int, count: int) -> List[int]:
    """Le prime `count` uscite del generatore SplitMix64 inizializzato a `seed`."""
    seed = int(seed) & MASK64
    return [splitmix64((seed + k * GOLDEN_GAMMA) & MASK64) for k in range(count)]


def derive_seed(base_seed: int, *parts: int) -> int:
    """Seed a 64 bit da (base_seed, parti...).

    Ogni parte viene combinata in XOR con lo stato e rimescolata: aggiungere
    una nuova dimensione n non cambia i seed dei fold esistenti.
    """
    state = splitmix64(int(base_seed) & MASK64)
    for part in parts:
        state = splitmix64(state ^ (int(part) & MASK64))
    return state
