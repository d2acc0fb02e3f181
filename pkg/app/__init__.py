# hshcluster - landmark-based proximity clustering
