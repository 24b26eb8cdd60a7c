from .cluster import ClusterAbility

__all__ = ['ClusterAbility']
