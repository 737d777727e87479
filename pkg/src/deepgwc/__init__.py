"""Deep graph wavelet convolutional networks."""
