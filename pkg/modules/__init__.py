"""
model, sampling, graph and measure modules of hrg-extremes.
"""
