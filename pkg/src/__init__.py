"""
topoclass: omologia persistente cubica, persistence landscape e Landscape Layer
per la classificazione di immagini in scala di grigi.
"""
