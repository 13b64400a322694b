"""On-demand mobile-edge cloud offloading: task partition, minimum-occupancy demands and the JCC auction."""
