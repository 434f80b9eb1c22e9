"""Weather-station network thinning with masked-target boosted-tree imputation."""

__version__ = "0.1.0"
