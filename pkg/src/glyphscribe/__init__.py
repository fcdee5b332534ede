"""glyphscribe: semi-automatic hieroglyph transcription.

Segment sign candidates from facsimile images, classify them with one of
three interchangeable backends (handcrafted features + linear SVM, a softmax
CNN, or metric-learning nearest-centroid), and assemble reviewed results
into MdC transcription lines exported as CSV.
"""

__version__ = "0.1.0"
