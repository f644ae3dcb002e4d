"""Click front end for qfm-casr."""
