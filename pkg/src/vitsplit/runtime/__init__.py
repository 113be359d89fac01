"""Two-process split execution: wire protocol, LZW codec, device and cloud agents."""
