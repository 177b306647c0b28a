"""Online description-similarity engine for invoice / purchase-order line items.

Pipeline: normalize line-item text, retrieve fuzzy candidates gated on
noun-phrase agreement, learn a bilinear ranking model (and a binary pair
classifier) from streaming human feedback, and resolve hierarchical
one-to-many matches through a product-taxonomy Jaccard score.
"""

__version__ = "0.1.0"
