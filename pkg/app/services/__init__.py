# Services package for hshcluster clustering logic
