# Data models package for hshcluster
