# Core package for hshcluster
