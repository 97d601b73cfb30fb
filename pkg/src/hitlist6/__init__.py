"""IPv6 hitlist pipeline."""
